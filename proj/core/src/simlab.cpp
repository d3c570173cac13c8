#include "hetstream/simlab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "hetstream/error.hpp"

namespace hetstream {

const char* to_string(CorrCase c) {
  return c == CorrCase::uncorrelated ? "uncorrelated" : "correlated";
}

const char* to_string(SimWeights w) { return w == SimWeights::estimated ? "estimated" : "true"; }

StreamSchema SimConfig::schema() const { return StreamSchema::with_default_names(p(), q(), r()); }

Mat SimConfig::covariance() const {
  const int d = p() + q() + r();
  Mat s = linalg::ar1_matrix(d, rho_base);
  if (corr_case == CorrCase::uncorrelated) {
    const int bounds[] = {0, p(), p() + q(), d};
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const auto block = [&](int v) {
          int b = 0;
          while (v >= bounds[b + 1]) ++b;
          return b;
        };
        if (block(i) != block(j)) s(i, j) = 0.0;
      }
    }
  }
  return s;
}

Vec SimConfig::true_coefficients() const {
  Vec c(p() + q() + r());
  c << beta, a * theta, gamma;
  return c;
}

void SimConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidConfig("sim config: " + msg); };
  if (p() < 1) fail("beta must have at least one entry");
  if (q() < 1) fail("theta must have at least one entry");
  if (!(sigma_sq >= 0.0) || !std::isfinite(sigma_sq)) fail("sigma_sq must be non-negative");
  if (!(rho_base > -1.0 && rho_base < 1.0)) fail("rho_base must lie in (-1, 1)");
  if (n < 1) fail("n must be at least 1");
  if (replications < 1) fail("replications must be at least 1");
  if (k < 1 || k >= j_max) fail("need 1 <= k < j_max");
  if (m < 0) fail("m must be non-negative");
  if (r() > 0 && (m < 1 || k + m >= j_max)) fail("gamma needs m >= 1 and k + m < j_max");
  if (r() == 0 && m > 0) fail("m is set but gamma is empty");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (!std::isfinite(a)) fail("a must be finite");
  for (int c : checkpoints) {
    if (c < 1 || c > j_max) fail("checkpoint " + std::to_string(c) + " outside 1..j_max");
  }
}

// splitmix64 finalizer.
static std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate) {
  return mix(mix(seed) ^ mix(replicate + 0x632be59bd9b4e019ULL));
}

StreamGenerator::StreamGenerator(const SimConfig& config, std::uint64_t replicate)
    : config_(config),
      chol_(linalg::cholesky(config.covariance())),
      coef_(config.true_coefficients()),
      rng_(replicate_seed(config.seed, replicate)) {}

RawBatch StreamGenerator::next() {
  const int p = config_.p();
  const int q = config_.q();
  const int r = config_.r();
  const int d = p + q + r;
  const int n = config_.n;
  Mat u(n, d);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) u(i, c) = normal_(rng_);
  }
  const Mat cov = u * chol_.transpose();
  Vec eps(n);
  const double sd = std::sqrt(config_.sigma_sq);
  for (int i = 0; i < n; ++i) eps(i) = sd * normal_(rng_);

  RawBatch b;
  b.x = cov.leftCols(p);
  if (next_ > config_.k) b.z = cov.middleCols(p, q);
  if (r > 0 && next_ > config_.k + config_.m) b.w = cov.rightCols(r);
  b.y = cov * coef_ + eps;
  ++next_;
  return b;
}

std::vector<RawBatch> gen_stream(const SimConfig& config, std::uint64_t replicate) {
  config.validate();
  StreamGenerator gen(config, replicate);
  std::vector<RawBatch> out;
  out.reserve(static_cast<std::size_t>(config.j_max));
  for (int j = 1; j <= config.j_max; ++j) out.push_back(gen.next());
  return out;
}

int worker_threads() {
  if (const char* env = std::getenv("HETSTREAM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

ReplicateRecord drive(const SimConfig& cfg, std::uint64_t replicate, const RunOptions& opts) {
  const StreamSchema schema = cfg.schema();
  EngineConfig ec;
  ec.convention = cfg.convention;
  ec.projection = cfg.projection;
  AccumulatorState aue(schema, ec);
  NueEstimator nue(schema);
  AveEstimator ave(schema);

  const Mat sigma = cfg.covariance();
  const int p = cfg.p();
  const int q = cfg.q();
  const int r = cfg.r();
  UpdateOptions first;
  first.case_label =
      cfg.corr_case == CorrCase::uncorrelated ? CaseLabel::uncorrelated : CaseLabel::correlated;
  SecondUpdateOptions second;
  if (cfg.weights == SimWeights::truth) {
    first.initial = InitialChoices{cfg.sigma_sq, cfg.a * cfg.theta, sigma.block(p, p, q, q)};
    Vec coef(q + r);
    coef << cfg.a * cfg.theta, cfg.gamma;
    if (r > 0) second.initial = InitialChoices{cfg.sigma_sq, coef, sigma.block(p, p, q + r, q + r)};
  }

  const std::set<int> marks(cfg.checkpoints.begin(), cfg.checkpoints.end());
  const int last = marks.empty() ? cfg.j_max : *marks.rbegin();
  ReplicateRecord rec;
  rec.replicate = replicate;
  StreamGenerator gen(cfg, replicate);
  for (int j = 1; j <= last; ++j) {
    const BatchStats s = compress_batch(gen.next(), schema);
    if (s.phase() == Phase::initial) {
      aue.ingest_pre_change(s);
    } else if (aue.phase() == Phase::initial) {
      aue.begin_update_phase(s, first);
    } else if (s.phase() == Phase::twice_updated && aue.phase() == Phase::updated) {
      aue.begin_second_update(s, second);
    } else {
      aue.ingest_post_change(s);
    }
    nue.ingest(s);
    if (opts.run_ave) ave.ingest(s);

    if (marks.count(j) == 0) continue;
    CheckpointRecord cp;
    cp.checkpoint = j;
    cp.aue = aue.estimate();
    cp.nue = nue.estimate();
    if (opts.run_ave) cp.ave = ave.estimate();
    if (opts.run_tests && aue.phase() == Phase::updated) {
      cp.aue_test = test_theta_zero(aue, cfg.alpha);
      cp.nue_test = nue.test_theta_zero(cfg.alpha);
    }
    rec.checkpoints.push_back(std::move(cp));
  }
  return rec;
}

struct Moments {
  std::vector<double> sum;
  double sq = 0.0;
  double sq2 = 0.0;
  long count = 0;

  void add(const Vec& err) {
    if (sum.empty()) sum.assign(static_cast<std::size_t>(err.size()), 0.0);
    for (Eigen::Index i = 0; i < err.size(); ++i) sum[static_cast<std::size_t>(i)] += err(i);
    const double v = err.squaredNorm() / static_cast<double>(err.size());
    sq += v;
    sq2 += v * v;
    ++count;
  }
};

}  // namespace

std::vector<ReplicateRecord> run_replicates(const SimConfig& config, const RunOptions& options) {
  config.validate();
  const int reps = config.replications;
  const int threads = std::clamp(options.threads > 0 ? options.threads : worker_threads(), 1, reps);
  std::vector<ReplicateRecord> out(static_cast<std::size_t>(reps));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(reps));

  auto work = [&](int t) {
    for (int i = t; i < reps; i += threads) {
      try {
        out[static_cast<std::size_t>(i)] = drive(config, static_cast<std::uint64_t>(i), options);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (int i = 0; i < reps; ++i) {
    if (!errors[static_cast<std::size_t>(i)]) continue;
    try {
      std::rethrow_exception(errors[static_cast<std::size_t>(i)]);
    } catch (const std::exception& e) {
      throw ReplicateFailure("replicate " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

double SimResult::value(const std::string& method, int checkpoint, const std::string& metric) const {
  for (const auto& row : rows) {
    if (row.method == method && row.checkpoint == checkpoint && row.metric == metric) {
      return row.value;
    }
  }
  throw std::out_of_range("no result row " + method + "/" + std::to_string(checkpoint) + "/" +
                          metric);
}

void SimResult::write_csv(std::ostream& out) const {
  out << "method,checkpoint,metric,value\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%.10g", row.value);
    out << row.method << ',' << row.checkpoint << ',' << row.metric << ',' << buf << '\n';
  }
}

SimResult run_bias_mse(const SimConfig& config, int threads) {
  const auto start = std::chrono::steady_clock::now();
  SimConfig cfg = config;
  if (cfg.checkpoints.empty()) cfg.checkpoints = {cfg.j_max};
  RunOptions opts;
  opts.threads = threads;
  const auto records = run_replicates(cfg, opts);

  const Vec truth = cfg.true_coefficients();
  const int p = cfg.p();
  const int q = cfg.q();
  const char* methods[] = {"AUE", "NUE", "AVE"};
  SimResult res;
  const std::size_t ncp = records.front().checkpoints.size();
  for (std::size_t c = 0; c < ncp; ++c) {
    for (int mi = 0; mi < 3; ++mi) {
      Moments groups[3];
      for (const auto& rec : records) {
        const CheckpointRecord& cp = rec.checkpoints[c];
        const EstimateReport& e = mi == 0 ? cp.aue : (mi == 1 ? cp.nue : cp.ave);
        groups[0].add(e.beta - truth.head(p));
        if (e.theta) groups[1].add(*e.theta - truth.segment(p, q));
        if (e.gamma) groups[2].add(*e.gamma - truth.tail(cfg.r()));
      }
      const char* names[] = {"beta", "theta", "gamma"};
      for (int g = 0; g < 3; ++g) {
        const Moments& mo = groups[g];
        if (mo.count == 0) continue;
        const double reps = static_cast<double>(mo.count);
        double l1 = 0.0;
        for (double s : mo.sum) l1 += std::fabs(s / reps);
        const double dim = static_cast<double>(mo.sum.size());
        const double mse = mo.sq / reps;
        const double var = mo.count > 1 ? std::max(mo.sq2 / reps - mse * mse, 0.0) * reps / (reps - 1)
                                        : 0.0;
        const int j = records.front().checkpoints[c].checkpoint;
        res.rows.push_back({methods[mi], j, std::string("bias_") + names[g], l1 / dim});
        res.rows.push_back({methods[mi], j, std::string("MSE_") + names[g], mse});
        res.rows.push_back({methods[mi], j, std::string("MSE_") + names[g] + "_se",
                            std::sqrt(var / reps)});
      }
    }
  }
  res.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

namespace {

std::string format_a(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", a);
  return buf;
}

void power_rows(const SimConfig& cfg, int threads, const std::string& suffix, SimResult& res) {
  RunOptions opts;
  opts.threads = threads;
  opts.run_tests = true;
  opts.run_ave = false;
  const auto records = run_replicates(cfg, opts);
  const double reps = static_cast<double>(records.size());
  const std::size_t ncp = records.front().checkpoints.size();
  for (std::size_t c = 0; c < ncp; ++c) {
    if (!records.front().checkpoints[c].aue_test) continue;
    const int j = records.front().checkpoints[c].checkpoint;
    for (int mi = 0; mi < 2; ++mi) {
      double hits = 0.0;
      for (const auto& rec : records) {
        const auto& t = mi == 0 ? rec.checkpoints[c].aue_test : rec.checkpoints[c].nue_test;
        if (t->reject) hits += 1.0;
      }
      const double rate = hits / reps;
      const std::string method = std::string(mi == 0 ? "AUE" : "NUE") + suffix;
      res.rows.push_back({method, j, "rejection_rate", rate});
      res.rows.push_back({method, j, "rejection_rate_se", std::sqrt(rate * (1.0 - rate) / reps)});
    }
  }
}

}  // namespace

SimResult run_power(const SimConfig& config, const std::vector<double>& a_grid, int threads) {
  const auto start = std::chrono::steady_clock::now();
  SimConfig cfg = config;
  if (cfg.checkpoints.empty()) {
    for (int j = cfg.k + 1; j <= (cfg.m > 0 ? cfg.k + cfg.m : cfg.j_max); ++j) {
      cfg.checkpoints.push_back(j);
    }
  }
  SimResult res;
  if (a_grid.empty()) {
    power_rows(cfg, threads, "", res);
  } else {
    for (double a : a_grid) {
      cfg.a = a;
      power_rows(cfg, threads, "[a=" + format_a(a) + "]", res);
    }
  }
  res.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

// ---- config files ----

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') {
    throw InvalidConfig("config key '" + key + "': cannot parse '" + text + "' as a number");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0') {
    throw InvalidConfig("config key '" + key + "': cannot parse '" + text + "' as an integer");
  }
  return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(key, trim(item)));
  return out;
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

SimConfig parse_sim_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
      throw InvalidConfig("config key '" + key + "' given twice");
    }
  }

  static const std::set<std::string> known = {
      "p",      "q",         "r",    "beta",  "theta",        "gamma",      "sigma_sq",
      "corr_case", "rho_base", "n",  "k",     "m",            "j_max",      "replications",
      "seed",   "a",         "checkpoints", "alpha", "convention", "weights", "projection"};
  for (const auto& [key, value] : kv) {
    if (known.count(key) == 0) throw InvalidConfig("unknown config key '" + key + "'");
  }
  for (const char* req : {"beta", "theta", "sigma_sq", "n", "k", "j_max"}) {
    if (kv.count(req) == 0) throw InvalidConfig(std::string("missing config key '") + req + "'");
  }

  SimConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  c.beta = to_vec(parse_list("beta", *get("beta")));
  c.theta = to_vec(parse_list("theta", *get("theta")));
  if (auto v = get("gamma")) c.gamma = to_vec(parse_list("gamma", *v));
  c.sigma_sq = parse_real("sigma_sq", *get("sigma_sq"));
  c.n = static_cast<int>(parse_int("n", *get("n")));
  c.k = static_cast<int>(parse_int("k", *get("k")));
  c.j_max = static_cast<int>(parse_int("j_max", *get("j_max")));
  if (auto v = get("m")) c.m = static_cast<int>(parse_int("m", *v));
  if (auto v = get("rho_base")) c.rho_base = parse_real("rho_base", *v);
  if (auto v = get("replications")) c.replications = static_cast<int>(parse_int("replications", *v));
  if (auto v = get("seed")) c.seed = static_cast<std::uint64_t>(parse_int("seed", *v));
  if (auto v = get("a")) c.a = parse_real("a", *v);
  if (auto v = get("alpha")) c.alpha = parse_real("alpha", *v);
  if (auto v = get("checkpoints")) {
    for (double x : parse_list("checkpoints", *v)) c.checkpoints.push_back(static_cast<int>(x));
  }
  if (auto v = get("corr_case")) {
    if (*v == "uncorrelated") {
      c.corr_case = CorrCase::uncorrelated;
    } else if (*v == "correlated") {
      c.corr_case = CorrCase::correlated;
    } else {
      throw InvalidConfig("config key 'corr_case': expected uncorrelated or correlated");
    }
  }
  if (auto v = get("convention")) {
    if (*v == "gram-squared") {
      c.convention = WeightConvention::gram_squared;
    } else if (*v == "linear") {
      c.convention = WeightConvention::linear;
    } else {
      throw InvalidConfig("config key 'convention': expected gram-squared or linear");
    }
  }
  if (auto v = get("weights")) {
    if (*v == "estimated") {
      c.weights = SimWeights::estimated;
    } else if (*v == "true") {
      c.weights = SimWeights::truth;
    } else {
      throw InvalidConfig("config key 'weights': expected estimated or true");
    }
  }
  if (auto v = get("projection")) {
    if (*v == "frozen") {
      c.projection = ProjectionMode::frozen;
    } else if (*v == "refined") {
      c.projection = ProjectionMode::refined;
    } else {
      throw InvalidConfig("config key 'projection': expected frozen or refined");
    }
  }
  const std::pair<const char*, int> dims[] = {{"p", c.p()}, {"q", c.q()}, {"r", c.r()}};
  for (const auto& [key, size] : dims) {
    if (auto v = get(key); v && parse_int(key, *v) != size) {
      throw InvalidConfig(std::string("config key '") + key + "' disagrees with the coefficient length");
    }
  }
  c.validate();
  return c;
}

SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file '" + path + "'");
  return parse_sim_config(in);
}

namespace {

// Shortest %g form that reads back to the same double.
std::string exact(double v) {
  char buf[40];
  for (int digits = 6; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace

void write_sim_config(const SimConfig& c, std::ostream& out) {
  auto list = [](const Vec& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i > 0) s += ", ";
      s += exact(v(i));
    }
    return s;
  };
  out << "beta = " << list(c.beta) << '\n';
  out << "theta = " << list(c.theta) << '\n';
  if (c.r() > 0) out << "gamma = " << list(c.gamma) << '\n';
  out << "sigma_sq = " << exact(c.sigma_sq) << '\n';
  out << "corr_case = " << to_string(c.corr_case) << '\n';
  out << "rho_base = " << exact(c.rho_base) << '\n';
  out << "n = " << c.n << "\nk = " << c.k << "\nm = " << c.m << "\nj_max = " << c.j_max << '\n';
  out << "replications = " << c.replications << "\nseed = " << c.seed << '\n';
  out << "a = " << exact(c.a) << '\n';
  if (!c.checkpoints.empty()) {
    out << "checkpoints = ";
    for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
      out << (i ? ", " : "") << c.checkpoints[i];
    }
    out << '\n';
  }
  out << "alpha = " << exact(c.alpha) << '\n';
  out << "convention = " << to_string(c.convention) << '\n';
  out << "weights = " << to_string(c.weights) << '\n';
  out << "projection = " << to_string(c.projection) << '\n';
}

// ---- presets ----

SimConfig preset(const std::string& name, int n) {
  SimConfig c;
  c.n = n;
  c.sigma_sq = 2.0;
  c.k = 10;
  c.j_max = 20;
  c.checkpoints = {12, 16, 20};
  Vec beta_a(2);
  beta_a << 1, -1;
  Vec theta_a(1);
  theta_a << 1;
  Vec beta_b(5);
  beta_b << 1, -1, 2, -0.5, 0.5;
  Vec theta_b(2);
  theta_b << 1, -1;

  if (name == "ex1a-uncorrelated" || name == "ex1a-correlated") {
    c.beta = beta_a;
    c.theta = theta_a;
  } else if (name == "ex1b-uncorrelated" || name == "ex1b-correlated") {
    c.beta = beta_b;
    c.theta = theta_b;
  } else if (name == "ex2-uncorrelated" || name == "ex2-correlated") {
    c.beta = beta_b;
    c.theta = theta_b;
    c.a = 0.0;
  } else if (name == "ex3") {
    c.beta = beta_b;
    c.theta = theta_b;
    c.checkpoints.clear();
    for (int j = 11; j <= 20; ++j) c.checkpoints.push_back(j);
  } else if (name == "ex4-s2" || name == "ex4-s4") {
    c.beta.resize(4);
    c.beta << 1, -1, 0.5, -0.5;
    c.theta.resize(3);
    c.theta << 1, -1, 0.5;
    c.gamma.resize(2);
    c.gamma << 1, -0.5;
    c.sigma_sq = name == "ex4-s2" ? 2.0 : 4.0;
    c.m = 10;
    c.j_max = 30;
    c.checkpoints = {25, 30};
  } else {
    throw InvalidConfig("unknown preset '" + name + "'");
  }
  c.projection = ProjectionMode::refined;
  c.corr_case = name.find("uncorrelated") != std::string::npos ? CorrCase::uncorrelated
                                                               : CorrCase::correlated;
  c.validate();
  return c;
}

std::vector<std::string> preset_names() {
  return {"ex1a-uncorrelated", "ex1a-correlated", "ex1b-uncorrelated", "ex1b-correlated",
          "ex2-uncorrelated",  "ex2-correlated",  "ex3",               "ex4-s2",
          "ex4-s4"};
}

}  // namespace hetstream
