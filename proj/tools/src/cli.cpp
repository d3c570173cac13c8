#include "hetstream_cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hetstream/error.hpp"
#include "hetstream/inference.hpp"
#include "hetstream/simlab.hpp"
#include "hetstream/state_io.hpp"
#include "hetstream/stream_engine.hpp"
#include "hetstream_cli/csv_batch.hpp"

namespace hetstream::cli {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string join(const Vec& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v(i));
  return s;
}

// Rows separated by ';'.
std::string join(const Mat& m) {
  std::string s;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) s += ';';
    s += join(Vec(m.row(i).transpose()));
  }
  return s;
}

void print_estimate(std::ostream& out, const EstimateReport& e) {
  out << "phase=" << to_string(e.phase) << '\n';
  out << "n_total=" << e.n_total << '\n';
  out << "m_post=" << e.m_post << '\n';
  out << "rho_hat=" << num(e.rho_hat) << '\n';
  out << "case=" << to_string(e.case_label) << '\n';
  out << "beta=" << join(e.beta) << '\n';
  if (e.theta) out << "theta=" << join(*e.theta) << '\n';
  if (e.gamma) out << "gamma=" << join(*e.gamma) << '\n';
  if (e.theta_naive) out << "theta_naive=" << join(*e.theta_naive) << '\n';
  if (e.cov_plugin) out << "se=" << join(Vec(e.cov_plugin->diagonal().cwiseSqrt())) << '\n';
}

void print_test(std::ostream& out, const TestReport& t) {
  out << "f=" << num(t.f_value) << '\n';
  out << "df1=" << t.df1 << '\n';
  out << "df2=" << t.df2 << '\n';
  out << "p_value=" << num(t.p_value) << '\n';
  out << "alpha=" << num(t.alpha) << '\n';
  out << "reject=" << (t.reject ? "true" : "false") << '\n';
  out << "degenerate=" << (t.degenerate ? "true" : "false") << '\n';
  out << "case=" << to_string(t.case_label) << '\n';
}

// Writes to `path`, or to `fallback` when the path is empty.
template <typename Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open output file '" + path + "'");
  write(f);
  if (!f) throw FormatError("write to '" + path + "' failed");
}

WeightConvention parse_convention(const std::string& s) {
  if (s == "gram-squared") return WeightConvention::gram_squared;
  if (s == "linear") return WeightConvention::linear;
  throw InvalidConfig("--convention: expected gram-squared or linear, got '" + s + "'");
}

Df2Mode parse_df2(const std::string& s) {
  if (s == "n-q") return Df2Mode::n_minus_q;
  if (s == "n-p-q") return Df2Mode::n_minus_p_minus_q;
  throw InvalidConfig("--df2: expected n-q or n-p-q, got '" + s + "'");
}

struct SimFlags {
  std::string config;
  std::string preset;
  int n = 100;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  int threads = 0;
  std::string out;
};

SimConfig resolve(const SimFlags& f) {
  if (f.config.empty() == f.preset.empty()) {
    throw InvalidConfig("give exactly one of --config or --preset");
  }
  SimConfig c = f.config.empty() ? preset(f.preset, f.n) : load_sim_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.replications) c.replications = *f.replications;
  c.validate();
  return c;
}

void add_sim_flags(CLI::App* cmd, SimFlags& f, bool allow_preset) {
  cmd->add_option("--config", f.config, "key = value experiment file");
  if (allow_preset) {
    cmd->add_option("--preset", f.preset, "built-in experiment (see replicate-table --list)");
    cmd->add_option("--n", f.n, "batch size for presets");
  }
  cmd->add_option("--seed", f.seed, "overrides the config seed");
  cmd->add_option("--replications", f.replications, "overrides the config replication count");
  cmd->add_option("--threads", f.threads, "worker threads (default: HETSTREAM_THREADS or cores)");
  cmd->add_option("--out", f.out, "output CSV (default: stdout)");
}

struct StreamFlags {
  std::string state;
  std::string event;
  std::vector<std::string> files;
  bool print_estimate = false;
  int q = -1;
  int r = 0;
  std::string convention = "gram-squared";
  std::string projection = "frozen";
  std::string case_label = "correlated";
};

AccumulatorState open_state(const StreamFlags& f) {
  if (std::filesystem::exists(f.state)) return load_state_file(f.state);
  if (f.files.empty()) throw FormatError("state file '" + f.state + "' does not exist");
  if (f.q < 0) throw InvalidConfig("--q is required when creating a new state file");
  EngineConfig cfg;
  cfg.convention = parse_convention(f.convention);
  if (f.projection == "refined") {
    cfg.projection = ProjectionMode::refined;
  } else if (f.projection != "frozen") {
    throw InvalidConfig("--projection: expected frozen or refined");
  }
  const int p = count_x_columns(f.files.front());
  return new_stream(StreamSchema::with_default_names(p, f.q, f.r), cfg);
}

int cmd_ingest(const StreamFlags& f, std::ostream& out) {
  if (!f.event.empty() && f.event != "add-z" && f.event != "add-w") {
    throw InvalidConfig("--event: expected add-z or add-w");
  }
  if (f.case_label != "correlated" && f.case_label != "uncorrelated") {
    throw InvalidConfig("--case: expected correlated or uncorrelated");
  }
  AccumulatorState state = open_state(f);
  for (std::size_t i = 0; i < f.files.size(); ++i) {
    const RawBatch raw = read_batch_file(f.files[i], state.schema());
    const BatchStats stats = compress_batch(raw, state.schema());
    if (i == 0 && f.event == "add-z") {
      UpdateOptions o;
      o.case_label = f.case_label == "uncorrelated" ? CaseLabel::uncorrelated : CaseLabel::correlated;
      state.begin_update_phase(stats, o);
      const auto& h = *state.homogenization();
      out << "event=add-z batch=" << h.estimated_on << '\n';
      out << "b_hat=" << join(h.b_hat) << '\n';
      out << "sigma0_sq=" << num(state.weights()->sigma0_sq) << '\n';
    } else if (i == 0 && f.event == "add-w") {
      state.begin_second_update(stats);
      const auto& h = *state.homogenization();
      out << "event=add-w batch=" << *h.second_estimated_on << '\n';
      out << "c_hat=" << join(*h.c_hat) << '\n';
      out << "d_hat=" << join(*h.d_hat) << '\n';
      out << "sigma0_sq=" << num(state.weights()->sigma0_sq) << '\n';
    } else if (state.phase() == Phase::initial) {
      state.ingest_pre_change(stats);
    } else {
      state.ingest_post_change(stats);
    }
    if (f.print_estimate) {
      out << "batch=" << state.batches() << '\n';
      try {
        print_estimate(out, state.estimate());
      } catch (const SingularMatrix&) {
        out << "estimate=unavailable\n";
      }
    }
  }
  save_state_file(state, f.state);
  return ok;
}

int cmd_generate(const SimFlags& f, std::uint64_t replicate, const std::string& dir,
                 std::ostream& out) {
  const SimConfig c = resolve(f);
  std::filesystem::create_directories(dir);
  StreamGenerator gen(c, replicate);
  const StreamSchema schema = c.schema();
  for (int j = 1; j <= c.j_max; ++j) {
    char name[32];
    std::snprintf(name, sizeof name, "batch_%03d.csv", j);
    const std::string path = (std::filesystem::path(dir) / name).string();
    emit(path, out, [&](std::ostream& o) { write_batch_csv(o, gen.next(), schema); });
    out << path << '\n';
  }
  return ok;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> grid;
  std::stringstream in(s);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || *end != '\0') throw InvalidConfig("--a-grid: bad value '" + cell + "'");
    grid.push_back(v);
  }
  return grid;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming regression with covariate additions"};
  app.name("hetstream");
  app.require_subcommand(1);

  SimFlags sim;
  auto* simulate = app.add_subcommand("simulate", "bias/MSE experiment from a config file");
  add_sim_flags(simulate, sim, false);

  SimFlags table;
  bool list = false;
  auto* replicate = app.add_subcommand("replicate-table", "bias/MSE experiment from a preset");
  add_sim_flags(replicate, table, true);
  replicate->add_flag("--list", list, "print preset names");
  bool dump = false;
  replicate->add_flag("--dump-config", dump, "print the preset as a config file instead of running it");

  SimFlags pw;
  std::string a_grid;
  auto* power = app.add_subcommand("power", "rejection rates of the theta = 0 tests");
  add_sim_flags(power, pw, true);
  power->add_option("--a-grid", a_grid, "comma-separated multipliers of theta");

  SimFlags gen;
  std::uint64_t gen_rep = 0;
  std::string gen_dir;
  auto* generate = app.add_subcommand("generate", "write one simulated stream as batch CSVs");
  add_sim_flags(generate, gen, true);
  generate->add_option("--replicate", gen_rep, "replicate index");
  generate->add_option("--dir", gen_dir, "output directory")->required();

  StreamFlags sf;
  auto* ingest = app.add_subcommand("ingest", "feed batch CSV files into a state file");
  ingest->add_option("--state", sf.state, "state file (created when absent)")->required();
  ingest->add_option("--event", sf.event, "add-z or add-w: the first file opens a new phase");
  ingest->add_option("--q", sf.q, "number of z columns (new state only)");
  ingest->add_option("--r", sf.r, "number of w columns (new state only)");
  ingest->add_option("--convention", sf.convention, "gram-squared or linear (new state only)");
  ingest->add_option("--projection", sf.projection, "frozen or refined (new state only)");
  ingest->add_option("--case", sf.case_label, "correlated or uncorrelated (with --event add-z)");
  ingest->add_flag("--estimate", sf.print_estimate, "print the estimate after each batch");
  ingest->add_option("files", sf.files, "batch CSV files in arrival order")->required();

  std::string est_state;
  auto* estimate = app.add_subcommand("estimate", "print the current estimate");
  estimate->add_option("--state", est_state, "state file")->required();

  std::string test_state;
  double alpha = 0.05;
  std::string df2 = "n-q";
  auto* test = app.add_subcommand("test", "F-test of theta = 0");
  test->add_option("--state", test_state, "state file")->required();
  test->add_option("--alpha", alpha, "significance level");
  test->add_option("--df2", df2, "denominator df: n-q (default) or n-p-q");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : config_error;
  }

  try {
    if (simulate->parsed()) {
      const SimResult r = run_bias_mse(resolve(sim), sim.threads);
      emit(sim.out, out, [&](std::ostream& o) { r.write_csv(o); });
    } else if (replicate->parsed()) {
      if (list) {
        for (const auto& name : preset_names()) out << name << '\n';
        return ok;
      }
      if (dump) {
        const SimConfig c = resolve(table);
        emit(table.out, out, [&](std::ostream& o) { write_sim_config(c, o); });
        return ok;
      }
      const SimResult r = run_bias_mse(resolve(table), table.threads);
      emit(table.out, out, [&](std::ostream& o) { r.write_csv(o); });
    } else if (power->parsed()) {
      const SimResult r = run_power(resolve(pw), parse_grid(a_grid), pw.threads);
      emit(pw.out, out, [&](std::ostream& o) { r.write_csv(o); });
    } else if (generate->parsed()) {
      return cmd_generate(gen, gen_rep, gen_dir, out);
    } else if (ingest->parsed()) {
      return cmd_ingest(sf, out);
    } else if (estimate->parsed()) {
      print_estimate(out, load_state_file(est_state).estimate());
    } else if (test->parsed()) {
      TestOptions o;
      o.alpha = alpha;
      o.df2_mode = parse_df2(df2);
      const AccumulatorState s = load_state_file(test_state);
      TestReport t = f_statistic(s, o);
      print_test(out, t);
    }
    return ok;
  } catch (const InvalidConfig& e) {
    err << "hetstream: config error: " << e.what() << '\n';
    return config_error;
  } catch (const PhaseMismatch& e) {
    err << "hetstream: protocol error: " << e.what() << '\n';
    return protocol_error;
  } catch (const SchemaMismatch& e) {
    err << "hetstream: protocol error: " << e.what() << '\n';
    return protocol_error;
  } catch (const std::exception& e) {
    err << "hetstream: error: " << e.what() << '\n';
    return runtime_error;
  }
}

}  // namespace hetstream::cli
