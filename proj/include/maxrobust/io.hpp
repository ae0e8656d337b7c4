#pragma once

// File formats.
//
// Model (JSON):
//   {"format": "maxrobust-model", "version": 1, "kind": "linear" | "conv",
//    "d": <int>, "L": <int>, "layers": [[w_1...], ...]}
//   A linear model has L = 1 and its weight as the single layer.
//
// Trace (CSV, or JSON lines when the path ends in .jsonl):
//   step,log_risk,margin_l1,margin_l2,margin_linf,margin_fourier_linf,
//   norm_l1,norm_l2,norm_linf,norm_fourier_l1
//   margin_<k> is the margin against attacks bounded in norm k; it is "nan"
//   (null in JSON) while the weight is zero.
//
// Attack report (CSV):
//   index,clean,adversarial,flipped,delta_l1,delta_l2,delta_linf,
//   delta_fourier_l1,delta_fourier_linf
//
// Sweep records (CSV):
//   method,attack,d,n,ratio,seed,margin,eps_hat,oracle_margin,
//   ratio_to_oracle,steps,oracle_converged,status
//   Runtimes go to a separate timing file so record files are reproducible
//   byte for byte.
//
// Floating-point values are written with 17 significant digits.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maxrobust/attacks.hpp"
#include "maxrobust/optimizers.hpp"

namespace maxrobust {

inline constexpr int kModelFormatVersion = 1;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string column_name(NormKind k) {
  std::string s = to_string(k);
  for (char& c : s)
    if (c == '-') c = '_';
  return s;
}

namespace detail {

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << text;
  if (!out) throw FormatError("write failed for '" + path + "'");
}

inline nlohmann::json to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from_json(const nlohmann::json& a, Eigen::Index d) {
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != d) {
    throw FormatError("model layer must be an array of " + std::to_string(d) + " numbers");
  }
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& x = a[static_cast<std::size_t>(i)];
    if (!x.is_number()) throw FormatError("model layer entries must be numbers");
    v[i] = x.get<double>();
  }
  return v;
}

}  // namespace detail

inline nlohmann::json model_to_json(const Model& m) {
  nlohmann::json j;
  j["format"] = "maxrobust-model";
  j["version"] = kModelFormatVersion;
  j["kind"] = model_kind(m);
  j["d"] = model_dim(m);
  nlohmann::json layers = nlohmann::json::array();
  if (const auto* lin = std::get_if<LinearModel>(&m)) {
    layers.push_back(detail::to_json(lin->w));
  } else {
    for (const auto& l : std::get<ConvLinearNet>(m).layers()) layers.push_back(detail::to_json(l));
  }
  j["L"] = layers.size();
  j["layers"] = std::move(layers);
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "maxrobust-model") throw FormatError("not a maxrobust model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) throw FormatError("unsupported model version " + std::to_string(version));
    const std::string kind = j.at("kind").get<std::string>();
    const auto d = j.at("d").get<Eigen::Index>();
    const auto& layers = j.at("layers");
    if (d < 1 || !layers.is_array()) throw FormatError("model: bad dimension or layers");
    if (j.contains("L") && j["L"].get<std::size_t>() != layers.size()) throw FormatError("model: L does not match layers");
    if (kind == "linear") {
      if (layers.size() != 1) throw FormatError("linear model must have exactly one layer");
      return LinearModel{detail::vector_from_json(layers[0], d)};
    }
    if (kind == "conv") {
      std::vector<Vector> ws;
      for (const auto& l : layers) ws.push_back(detail::vector_from_json(l, d));
      return ConvLinearNet(std::move(ws));
    }
    throw FormatError("unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
}

inline void save_model(const Model& m, const std::string& path) {
  detail::write_text(path, model_to_json(m).dump(2) + "\n");
}

inline Model load_model(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------

inline std::string trace_csv_header() {
  std::string h = "step,log_risk";
  for (NormKind k : kAttackNorms) h += ",margin_" + column_name(k);
  for (NormKind k : kWeightNorms) h += ",norm_" + column_name(k);
  return h;
}

inline std::string trace_to_csv(const TrainTrace& t) {
  std::string out = trace_csv_header() + "\n";
  for (const auto& r : t.rows) {
    out += std::to_string(r.step) + "," + format_double(r.log_risk);
    for (double m : r.margin) out += "," + format_double(m);
    for (double n : r.weight_norm) out += "," + format_double(n);
    out += "\n";
  }
  return out;
}

inline std::string trace_to_jsonl(const TrainTrace& t) {
  std::string out;
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  for (const auto& r : t.rows) {
    nlohmann::json j;
    j["step"] = r.step;
    j["log_risk"] = num(r.log_risk);
    for (std::size_t k = 0; k < kAttackNorms.size(); ++k) j["margin_" + column_name(kAttackNorms[k])] = num(r.margin[k]);
    for (std::size_t k = 0; k < kWeightNorms.size(); ++k) j["norm_" + column_name(kWeightNorms[k])] = num(r.weight_norm[k]);
    out += j.dump() + "\n";
  }
  return out;
}

inline void save_trace(const TrainTrace& t, const std::string& path) {
  const bool jsonl = path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0;
  detail::write_text(path, jsonl ? trace_to_jsonl(t) : trace_to_csv(t));
}

inline std::string attack_report_to_csv(const std::vector<AttackReportRow>& rows) {
  std::string out = "index,clean,adversarial,flipped";
  for (NormKind k : kAllNorms) out += ",delta_" + column_name(k);
  out += "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.index) + "," + format_double(r.clean) + "," + format_double(r.adversarial) + "," +
           (r.flipped ? "1" : "0");
    for (double v : r.perturbation_norm) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SweepRecord {
  std::string method;
  NormKind attack = NormKind::L2;
  long d = 0;
  long n = 0;
  long ratio = 0;
  std::uint64_t seed = 0;
  double margin = 0.0;
  double eps_hat = 0.0;
  double oracle_margin = 0.0;
  double ratio_to_oracle = 0.0;
  long steps = 0;
  bool oracle_converged = false;
  std::string status = "ok";
  double runtime = 0.0;  // seconds; not part of the record file
};

inline std::string sweep_csv_header() {
  return "method,attack,d,n,ratio,seed,margin,eps_hat,oracle_margin,ratio_to_oracle,steps,oracle_converged,status";
}

inline std::string sweep_record_to_csv(const SweepRecord& r) {
  return r.method + "," + to_string(r.attack) + "," + std::to_string(r.d) + "," + std::to_string(r.n) + "," +
         std::to_string(r.ratio) + "," + std::to_string(r.seed) + "," + format_double(r.margin) + "," +
         format_double(r.eps_hat) + "," + format_double(r.oracle_margin) + "," + format_double(r.ratio_to_oracle) +
         "," + std::to_string(r.steps) + "," + (r.oracle_converged ? "1" : "0") + "," + r.status;
}

inline std::string sweep_records_to_csv(const std::vector<SweepRecord>& rows) {
  std::string out = sweep_csv_header() + "\n";
  for (const auto& r : rows) out += sweep_record_to_csv(r) + "\n";
  return out;
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw FormatError("bad number '" + s + "'");
  }
  if (pos != s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

inline long parse_long(const std::string& s) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    throw FormatError("bad integer '" + s + "'");
  }
  if (pos != s.size()) throw FormatError("bad integer '" + s + "'");
  return v;
}

}  // namespace detail

inline std::vector<SweepRecord> sweep_records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::split(line, ',') != detail::split(sweep_csv_header(), ',')) {
    throw FormatError("sweep CSV: unexpected header");
  }
  std::vector<SweepRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 13) throw FormatError("sweep CSV: expected 13 fields, got " + std::to_string(f.size()));
    SweepRecord r;
    try {
      r.method = f[0];
      r.attack = parse_norm_kind(f[1]);
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("sweep CSV: ") + e.what());
    }
    r.d = detail::parse_long(f[2]);
    r.n = detail::parse_long(f[3]);
    r.ratio = detail::parse_long(f[4]);
    r.seed = static_cast<std::uint64_t>(detail::parse_long(f[5]));
    r.margin = detail::parse_double(f[6]);
    r.eps_hat = detail::parse_double(f[7]);
    r.oracle_margin = detail::parse_double(f[8]);
    r.ratio_to_oracle = detail::parse_double(f[9]);
    r.steps = detail::parse_long(f[10]);
    r.oracle_converged = f[11] == "1";
    r.status = f[12];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<SweepRecord> load_sweep_records(const std::string& path) {
  return sweep_records_from_csv(detail::read_text(path));
}

}  // namespace maxrobust
