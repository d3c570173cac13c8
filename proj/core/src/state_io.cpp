#include "hetstream/state_io.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "hetstream/error.hpp"

namespace hetstream {

struct StateAccess {
  static void save(const AccumulatorState& s, std::ostream& out);
  static AccumulatorState load(std::istream& in);
};

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  Writer& word(const std::string& w) {
    out_ << ' ' << w;
    return *this;
  }
  Writer& integer(long long v) {
    out_ << ' ' << v;
    return *this;
  }
  Writer& real(double v) {
    std::ostringstream s;
    s << std::hexfloat << v;
    out_ << ' ' << s.str();
    return *this;
  }
  Writer& vec(const Vec& v) {
    integer(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) real(v[i]);
    return *this;
  }
  Writer& mat(const Mat& m) {
    integer(m.rows()).integer(m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) real(m(i, j));
    return *this;
  }
  void line(const std::string& key) { out_ << key; }
  void end_line() { out_ << '\n'; }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw FormatError("state: unexpected end of input");
    return w;
  }
  void expect(const std::string& key) {
    const std::string w = word();
    if (w != key) throw FormatError("state: expected '" + key + "', found '" + w + "'");
  }
  long long integer() {
    const std::string w = word();
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(w.c_str(), &end, 10);
    if (errno != 0 || end == w.c_str() || *end != '\0') {
      throw FormatError("state: bad integer '" + w + "'");
    }
    return v;
  }
  double real() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') throw FormatError("state: bad real '" + w + "'");
    return v;
  }
  Vec vec() {
    const long long n = integer();
    if (n < 0 || n > 1 << 20) throw FormatError("state: bad vector size");
    Vec v(n);
    for (long long i = 0; i < n; ++i) v[i] = real();
    return v;
  }
  Mat mat() {
    const long long r = integer();
    const long long c = integer();
    if (r < 0 || c < 0 || r * c > 1 << 20) throw FormatError("state: bad matrix shape");
    Mat m(r, c);
    for (long long i = 0; i < r; ++i)
      for (long long j = 0; j < c; ++j) m(i, j) = real();
    return m;
  }

 private:
  std::istream& in_;
};

WeightConvention parse_convention(const std::string& s) {
  if (s == "gram-squared") return WeightConvention::gram_squared;
  if (s == "linear") return WeightConvention::linear;
  throw FormatError("state: unknown weight convention '" + s + "'");
}

}  // namespace

void StateAccess::save(const AccumulatorState& s, std::ostream& out) {
  Writer w(out);
  w.line("hetstream-state");
  w.integer(kStateFormatVersion).end_line();
  w.line("schema");
  w.integer(s.schema_.p).integer(s.schema_.q).integer(s.schema_.r).end_line();
  w.line("names");
  for (const auto& n : s.schema_.names) w.word(n);
  w.end_line();
  w.line("config");
  w.word(to_string(s.config_.convention)).real(s.config_.pivot_tolerance);
  w.word(to_string(s.config_.projection)).end_line();
  w.line("phase");
  w.integer(static_cast<int>(s.phase_)).word("case").word(to_string(s.case_label_)).end_line();
  w.line("counts");
  w.integer(s.batches_).integer(s.k_).integer(s.m_).end_line();
  for (const BatchStats* seg : {&s.pre_, &s.mid_, &s.post_}) {
    w.line("segment");
    w.integer(static_cast<int>(seg->phase())).integer(seg->n()).real(seg->yty());
    w.mat(seg->gram()).vec(seg->cross()).end_line();
  }
  w.line("weights");
  if (s.weights_) {
    const WeightSpec& ws = *s.weights_;
    w.integer(1).real(ws.sigma0_sq).vec(ws.theta0).mat(ws.e0_zz);
    w.vec(Eigen::Map<const Vec>(ws.sigma_bar_sq.data(),
                                static_cast<Eigen::Index>(ws.sigma_bar_sq.size())));
    w.vec(Eigen::Map<const Vec>(ws.row_weights.data(),
                                static_cast<Eigen::Index>(ws.row_weights.size())));
    w.word(to_string(ws.convention)).word(to_string(ws.provenance));
  } else {
    w.integer(0);
  }
  w.end_line();
  w.line("homog");
  if (s.homog_) {
    const HomogenizationMap& h = *s.homog_;
    w.integer(1).mat(h.b_hat).integer(h.estimated_on);
    w.integer(h.refined ? 1 : 0).integer(h.second_refined ? 1 : 0);
    w.integer(h.c_hat ? 1 : 0);
    if (h.c_hat) w.mat(*h.c_hat).mat(*h.d_hat).integer(*h.second_estimated_on);
  } else {
    w.integer(0);
  }
  w.end_line();
  w.line("sse");
  w.real(s.sse_).real(s.quad_).integer(s.sse_valid_ ? 1 : 0).end_line();
  w.line("fit");
  if (s.fit_) {
    w.integer(1).vec(*s.fit_);
  } else {
    w.integer(0);
  }
  w.end_line();
  out << "end\n";
  if (!out) throw FormatError("state: write failed");
}

AccumulatorState StateAccess::load(std::istream& in) {
  Reader r(in);
  r.expect("hetstream-state");
  const long long version = r.integer();
  if (version != kStateFormatVersion) {
    throw FormatError("state: unsupported format version " + std::to_string(version));
  }
  r.expect("schema");
  StreamSchema schema;
  schema.p = static_cast<int>(r.integer());
  schema.q = static_cast<int>(r.integer());
  schema.r = static_cast<int>(r.integer());
  r.expect("names");
  for (int i = 0; i < schema.p + schema.q + schema.r; ++i) schema.names.push_back(r.word());
  r.expect("config");
  EngineConfig config;
  config.convention = parse_convention(r.word());
  config.pivot_tolerance = r.real();
  const std::string mode = r.word();
  if (mode != "frozen" && mode != "refined") throw FormatError("state: bad projection mode");
  config.projection = mode == "refined" ? ProjectionMode::refined : ProjectionMode::frozen;

  AccumulatorState s(schema, config);
  r.expect("phase");
  const long long phase = r.integer();
  if (phase < 0 || phase > 2) throw FormatError("state: bad phase");
  s.phase_ = static_cast<Phase>(phase);
  r.expect("case");
  const std::string label = r.word();
  if (label != "correlated" && label != "uncorrelated") throw FormatError("state: bad case label");
  s.case_label_ = label == "correlated" ? CaseLabel::correlated : CaseLabel::uncorrelated;
  r.expect("counts");
  s.batches_ = static_cast<int>(r.integer());
  s.k_ = static_cast<int>(r.integer());
  s.m_ = static_cast<int>(r.integer());
  for (BatchStats* seg : {&s.pre_, &s.mid_, &s.post_}) {
    r.expect("segment");
    const long long sp = r.integer();
    if (sp < 0 || sp > 2) throw FormatError("state: bad segment phase");
    const long long n = r.integer();
    const double yty = r.real();
    Mat gram = r.mat();
    Vec cross = r.vec();
    try {
      *seg = BatchStats::from_moments(s.schema_, static_cast<Phase>(sp), n, std::move(gram),
                                      std::move(cross), yty);
    } catch (const Error& e) {
      throw FormatError(std::string("state: ") + e.what());
    }
  }
  r.expect("weights");
  if (r.integer() == 1) {
    WeightSpec ws;
    ws.sigma0_sq = r.real();
    ws.theta0 = r.vec();
    ws.e0_zz = r.mat();
    const Vec bars = r.vec();
    const Vec rows = r.vec();
    ws.sigma_bar_sq.assign(bars.data(), bars.data() + bars.size());
    ws.row_weights.assign(rows.data(), rows.data() + rows.size());
    ws.convention = parse_convention(r.word());
    const std::string prov = r.word();
    ws.provenance = prov == "non-random" ? WeightProvenance::non_random : WeightProvenance::estimated;
    s.weights_ = std::move(ws);
  }
  r.expect("homog");
  if (r.integer() == 1) {
    s.homog_.emplace();
    HomogenizationMap& h = *s.homog_;
    h.b_hat = r.mat();
    h.estimated_on = static_cast<int>(r.integer());
    h.refined = r.integer() == 1;
    h.second_refined = r.integer() == 1;
    if (r.integer() == 1) {
      h.c_hat.emplace(r.mat());
      h.d_hat.emplace(r.mat());
      h.second_estimated_on = static_cast<int>(r.integer());
    }
  }
  r.expect("sse");
  s.sse_ = r.real();
  s.quad_ = r.real();
  s.sse_valid_ = r.integer() == 1;
  r.expect("fit");
  if (r.integer() == 1) s.fit_ = r.vec();
  r.expect("end");

  const bool needs_weights = s.phase_ != Phase::initial;
  if (needs_weights && (!s.weights_ || !s.homog_)) {
    throw FormatError("state: updated phase without weights or homogenization map");
  }
  if (s.phase_ == Phase::twice_updated && !s.homog_->c_hat) {
    throw FormatError("state: twice-updated phase without C-hat/D-hat");
  }
  return s;
}

void save_state(const AccumulatorState& state, std::ostream& out) { StateAccess::save(state, out); }

AccumulatorState load_state(std::istream& in) { return StateAccess::load(in); }

void save_state_file(const AccumulatorState& state, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("state: cannot open '" + path + "' for writing");
  save_state(state, out);
}

AccumulatorState load_state_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("state: cannot open '" + path + "'");
  return load_state(in);
}

}  // namespace hetstream
