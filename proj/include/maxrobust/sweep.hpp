#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "maxrobust/io.hpp"
#include "maxrobust/oracle.hpp"

namespace maxrobust {

inline constexpr const char* kVersion = "0.1.0";

// Method tokens:
//   gd, signgd, cd       steepest descent w.r.t. l2, linf, l1
//   gd-ls                gd with Armijo line search from `ls_max`
//   prox-<reg>[@lambda]  proximal training, reg in {l1, l2, linf, fourier-l1};
//                        without @lambda one method per entry of `lambdas`,
//                        warm-started along the path
//   adv-<attack>[@f]     adversarial training at eps = f * (oracle margin);
//                        without @f one method per entry of `adv_factors`
//   conv-gd              2-layer linear conv net trained by gd
//   oracle               the min-norm solution itself
struct SweepSpec {
  long d = 100;
  std::vector<long> ratios{1, 2, 4, 8, 16, 32};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> methods{"gd", "signgd", "cd"};
  std::vector<NormKind> attacks{NormKind::L2, NormKind::L1, NormKind::Linf};
  long steps = 10000;
  long prox_steps = 2000;
  long adv_steps = 200000;
  std::vector<double> lambdas{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  std::vector<double> adv_factors{0.25, 0.5, 1.0, 1.5, 2.0};
  double gd_step = 0.1;
  double signgd_step = 0.01;
  double cd_step = 0.1;
  double adv_step = 0.1;
  double conv_step = 0.01;
  double conv_init_scale = 0.1;
  double ls_max = 10.0;
  long record_every = 1000;
  bool augment = true;
  Loss loss = Loss::Exponential;
  int workers = 0;  // 0: MAXROBUST_WORKERS, else hardware concurrency
};

inline nlohmann::json sweep_spec_to_json(const SweepSpec& s) {
  nlohmann::json j;
  j["d"] = s.d;
  j["ratios"] = s.ratios;
  j["seeds"] = s.seeds;
  j["methods"] = s.methods;
  std::vector<std::string> attacks;
  for (NormKind k : s.attacks) attacks.push_back(to_string(k));
  j["attacks"] = attacks;
  j["steps"] = s.steps;
  j["prox_steps"] = s.prox_steps;
  j["adv_steps"] = s.adv_steps;
  j["lambdas"] = s.lambdas;
  j["adv_factors"] = s.adv_factors;
  j["gd_step"] = s.gd_step;
  j["signgd_step"] = s.signgd_step;
  j["cd_step"] = s.cd_step;
  j["adv_step"] = s.adv_step;
  j["conv_step"] = s.conv_step;
  j["conv_init_scale"] = s.conv_init_scale;
  j["ls_max"] = s.ls_max;
  j["record_every"] = s.record_every;
  j["augment"] = s.augment;
  j["loss"] = to_string(s.loss);
  return j;
}

// FNV-1a of the canonical spec JSON (worker count excluded: it cannot change
// the output).
inline std::string sweep_spec_hash(const SweepSpec& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a64(sweep_spec_to_json(s).dump())));
  return buf;
}

enum class MethodFamily { Steepest, Proximal, Adversarial, Conv, Oracle };

struct MethodSpec {
  std::string token;
  MethodFamily family = MethodFamily::Steepest;
  NormKind geometry = NormKind::L2;  // steepest geometry, regularizer, or adversary
  bool line_search = false;
  double value = 0.0;  // lambda or eps factor
};

namespace detail {

inline std::string format_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

inline std::vector<MethodSpec> expand_methods(const SweepSpec& s) {
  std::vector<MethodSpec> out;
  for (const std::string& tok : s.methods) {
    const auto at = tok.find('@');
    const std::string head = tok.substr(0, at);
    std::optional<double> param;
    if (at != std::string::npos) {
      try {
        param = detail::parse_double(tok.substr(at + 1));
      } catch (const FormatError&) {
        throw InvalidArgument("method '" + tok + "': bad parameter");
      }
      if (!(*param >= 0.0) || !std::isfinite(*param)) throw InvalidArgument("method '" + tok + "': bad parameter");
    }
    if (head == "gd" || head == "signgd" || head == "cd" || head == "gd-ls") {
      if (param) throw InvalidArgument("method '" + tok + "' takes no parameter");
      MethodSpec m{tok, MethodFamily::Steepest};
      m.geometry = head == "signgd" ? NormKind::Linf : head == "cd" ? NormKind::L1 : NormKind::L2;
      m.line_search = head == "gd-ls";
      out.push_back(m);
    } else if (head.rfind("prox-", 0) == 0) {
      const NormKind reg = parse_norm_kind(head.substr(5));
      if (reg == NormKind::FourierLinf) throw InvalidArgument("method '" + tok + "': unsupported regularizer");
      const std::vector<double> values = param ? std::vector<double>{*param} : s.lambdas;
      for (double v : values) {
        if (!(v > 0.0)) throw InvalidArgument("method '" + tok + "': lambda must be positive");
        out.push_back({head + "@" + detail::format_param(v), MethodFamily::Proximal, reg, false, v});
      }
    } else if (head.rfind("adv-", 0) == 0) {
      const NormKind attack = parse_norm_kind(head.substr(4));
      if (attack == NormKind::FourierL1) throw InvalidArgument("method '" + tok + "': unsupported adversary");
      const std::vector<double> values = param ? std::vector<double>{*param} : s.adv_factors;
      for (double v : values) out.push_back({head + "@" + detail::format_param(v), MethodFamily::Adversarial, attack, false, v});
    } else if (head == "conv-gd" && !param) {
      out.push_back({tok, MethodFamily::Conv});
    } else if (head == "oracle" && !param) {
      out.push_back({tok, MethodFamily::Oracle});
    } else {
      throw InvalidArgument("unknown method '" + tok + "'");
    }
  }
  return out;
}

inline void validate_sweep_spec(const SweepSpec& s) {
  if (s.d < 2) throw InvalidArgument("sweep: d must be >= 2");
  if (s.ratios.empty() || s.seeds.empty() || s.methods.empty() || s.attacks.empty()) {
    throw InvalidArgument("sweep: ratios, seeds, methods and attacks must be non-empty");
  }
  for (long r : s.ratios)
    if (r < 1 || r > s.d) throw InvalidArgument("sweep: ratios must lie in [1, d]");
  for (NormKind a : s.attacks)
    if (a == NormKind::FourierL1) throw InvalidArgument("sweep: fourier-l1 attacks have no oracle");
  if (s.steps < 1 || s.prox_steps < 1 || s.adv_steps < 1 || s.record_every < 1) {
    throw InvalidArgument("sweep: step counts must be >= 1");
  }
  for (const auto& m : expand_methods(s)) {
    if (m.family == MethodFamily::Adversarial &&
        std::find(s.attacks.begin(), s.attacks.end(), m.geometry) == s.attacks.end()) {
      throw InvalidArgument("sweep: " + m.token + " needs " + to_string(m.geometry) + " among the attacks");
    }
  }
}

inline int sweep_worker_count(const SweepSpec& s) {
  if (s.workers > 0) return s.workers;
  if (const char* env = std::getenv("MAXROBUST_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

// Runs every task on `workers` threads; task i writes only its own slot.
inline void run_parallel(std::vector<std::function<void()>>& tasks, int workers) {
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr first_error;
  auto loop = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int k = std::min<int>(workers, static_cast<int>(tasks.size()));
  if (k <= 1) {
    loop();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < k; ++t) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

inline std::string sanitize_status(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

struct MethodOutcome {
  std::optional<Model> model;
  long steps = 0;
  double runtime = 0.0;
  std::string status = "ok";
};

}  // namespace detail

struct SweepResult {
  std::vector<SweepRecord> records;
  long oracle_nonconverged = 0;
};

inline long sweep_n(long d, long ratio) { return std::max(1L, d / ratio); }

inline SweepResult run_sweep(const SweepSpec& spec) {
  validate_sweep_spec(spec);
  const auto methods = expand_methods(spec);
  const std::size_t R = spec.ratios.size(), S = spec.seeds.size(), M = methods.size(), A = spec.attacks.size();
  const int workers = sweep_worker_count(spec);

  std::vector<Dataset> data(R * S);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t s = 0; s < S; ++s)
      data[r * S + s] = generate_gaussian_separable(spec.d, sweep_n(spec.d, spec.ratios[r]), spec.seeds[s], spec.augment);

  std::vector<OracleSolution> oracles(R * S * A);
  {
    std::vector<std::function<void()>> tasks;
    for (std::size_t c = 0; c < R * S; ++c)
      for (std::size_t a = 0; a < A; ++a)
        tasks.push_back([&, c, a] { oracles[c * A + a] = min_norm_solve(data[c], spec.attacks[a]); });
    detail::run_parallel(tasks, workers);
  }
  auto oracle_for = [&](std::size_t cell, NormKind attack) -> const OracleSolution& {
    const auto it = std::find(spec.attacks.begin(), spec.attacks.end(), attack);
    return oracles[cell * A + static_cast<std::size_t>(it - spec.attacks.begin())];
  };

  std::vector<detail::MethodOutcome> outcomes(R * S * M);
  {
    std::vector<std::function<void()>> tasks;
    for (std::size_t c = 0; c < R * S; ++c) {
      // One task per proximal path; each path covers its lambdas in order.
      std::map<NormKind, std::vector<std::size_t>> paths;
      for (std::size_t m = 0; m < M; ++m) {
        if (methods[m].family == MethodFamily::Proximal) {
          paths[methods[m].geometry].push_back(m);
          continue;
        }
        tasks.push_back([&, c, m] {
          const MethodSpec& ms = methods[m];
          const Dataset& ds = data[c];
          auto& out = outcomes[c * M + m];
          const auto t0 = std::chrono::steady_clock::now();
          TrainConfig cfg;
          cfg.loss = spec.loss;
          cfg.record_every = spec.record_every;
          cfg.steps = spec.steps;
          try {
            TrainTrace tr;
            switch (ms.family) {
              case MethodFamily::Steepest:
                cfg.norm_kind = ms.geometry;
                cfg.step_size = ms.geometry == NormKind::Linf ? spec.signgd_step
                                : ms.geometry == NormKind::L1 ? spec.cd_step
                                                              : spec.gd_step;
                if (ms.line_search) cfg.line_search_max = spec.ls_max;
                tr = train_steepest(ds, cfg);
                break;
              case MethodFamily::Adversarial: {
                cfg.steps = spec.adv_steps;
                cfg.step_size = spec.adv_step;
                const double eps = ms.value * oracle_for(c, ms.geometry).max_margin;
                tr = adversarial_training_linear(ds, eps, ms.geometry, cfg);
                break;
              }
              case MethodFamily::Conv:
                cfg.step_size = spec.conv_step;
                cfg.init_scale = spec.conv_init_scale;
                cfg.seed = ds.seed;
                tr = train_conv_gd(ds, cfg);
                break;
              case MethodFamily::Oracle:  // scored per attack from the oracle solutions
              case MethodFamily::Proximal: break;
            }
            if (ms.family == MethodFamily::Oracle) {
              out.steps = 0;
            } else {
              out.model = std::move(tr.model);
              out.steps = tr.steps_run;
            }
          } catch (const DivergenceError& e) {
            out.status = detail::sanitize_status(std::string("diverged: ") + e.what());
          }
          out.runtime = detail::elapsed(t0);
        });
      }
      for (const auto& [reg, idx] : paths) {
        tasks.push_back([&, c, idx = idx] {
          ProximalState state;
          TrainConfig cfg;
          cfg.loss = spec.loss;
          cfg.record_every = spec.record_every;
          cfg.steps = spec.prox_steps;
          bool failed = false;
          std::string why;
          for (std::size_t m : idx) {
            auto& out = outcomes[c * M + m];
            const auto t0 = std::chrono::steady_clock::now();
            if (failed) {
              out.status = why;
              continue;
            }
            cfg.reg = RegSpec{methods[m].geometry, methods[m].value};
            try {
              TrainTrace tr = train_proximal(data[c], cfg, state);
              out.model = std::move(tr.model);
              out.steps = tr.steps_run;
            } catch (const DivergenceError& e) {
              failed = true;
              why = detail::sanitize_status(std::string("diverged: ") + e.what());
              out.status = why;
            }
            out.runtime = detail::elapsed(t0);
          }
        });
      }
    }
    detail::run_parallel(tasks, workers);
  }

  // Scoring: one record per (method, attack) in each cell.
  SweepResult result;
  result.records.resize(R * S * M * A);
  {
    std::vector<std::function<void()>> tasks;
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t a = 0; a < A; ++a) {
            tasks.push_back([&, r, s, m, a] {
              const std::size_t c = r * S + s;
              const Dataset& ds = data[c];
              const NormKind attack = spec.attacks[a];
              const OracleSolution& o = oracles[c * A + a];
              const auto& out = outcomes[c * M + m];
              SweepRecord rec;
              rec.method = methods[m].token;
              rec.attack = attack;
              rec.d = spec.d;
              rec.n = ds.n();
              rec.ratio = spec.ratios[r];
              rec.seed = spec.seeds[s];
              rec.oracle_margin = o.max_margin;
              rec.oracle_converged = o.converged;
              rec.steps = out.steps;
              rec.runtime = out.runtime;
              rec.status = out.status;
              std::optional<Model> model = out.model;
              if (methods[m].family == MethodFamily::Oracle) {
                model = LinearModel{o.w};
                rec.steps = o.iterations;
              }
              if (model && !effective_weight(*model).isZero(0.0)) {
                rec.margin = margin(*model, ds, attack);
                AttackConfig ac;
                ac.norm = attack;
                rec.eps_hat = rec.margin > 0.0 ? max_robust_eps(*model, ds, ac) : 0.0;
              } else {
                rec.margin = std::numeric_limits<double>::quiet_NaN();
                if (rec.status == "ok") rec.status = "undefined-margin";
              }
              rec.ratio_to_oracle = rec.margin / rec.oracle_margin;
              if (!o.converged && rec.status == "ok") rec.status = "oracle-nonconverged";
              result.records[((r * S + s) * M + m) * A + a] = std::move(rec);
            });
          }
    detail::run_parallel(tasks, workers);
  }
  for (const auto& o : oracles) result.oracle_nonconverged += o.converged ? 0 : 1;
  return result;
}

// Writes the record CSV at `path`, the manifest at `path`.manifest.json and
// per-record runtimes at `path`.timing.csv.
inline void write_sweep_outputs(const SweepSpec& spec, const SweepResult& res, const std::string& path) {
  detail::write_text(path, sweep_records_to_csv(res.records));
  nlohmann::json man;
  man["tool"] = "maxrobust";
  man["version"] = kVersion;
  man["spec"] = sweep_spec_to_json(spec);
  man["spec_hash"] = sweep_spec_hash(spec);
  man["seeds"] = spec.seeds;
  man["records"] = res.records.size();
  man["oracle_nonconverged"] = res.oracle_nonconverged;
  man["output"] = path;
  man["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
  detail::write_text(path + ".manifest.json", man.dump(2) + "\n");
  std::string timing = "method,attack,ratio,seed,runtime_s\n";
  for (const auto& r : res.records) {
    timing += r.method + "," + to_string(r.attack) + "," + std::to_string(r.ratio) + "," + std::to_string(r.seed) +
              "," + format_double(r.runtime) + "\n";
  }
  detail::write_text(path + ".timing.csv", timing);
}

// ---------------------------------------------------------------------------
// Figure tables

inline const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids{"linear-linf", "linear-l2", "linear-l1",
                                            "conv-fourier", "tradeoff-adv", "tradeoff-reg"};
  return ids;
}

namespace detail {

inline bool figure_keeps(const std::string& id, const SweepRecord& r) {
  const std::string& m = r.method;
  const bool adv = m.rfind("adv-", 0) == 0;
  const bool prox = m.rfind("prox-", 0) == 0;
  auto param_norm = [&](std::size_t prefix) { return parse_norm_kind(m.substr(prefix, m.find('@') - prefix)); };
  if (id == "linear-linf") return r.attack == NormKind::Linf && !adv && m != "conv-gd";
  if (id == "linear-l2") return r.attack == NormKind::L2 && !adv && m != "conv-gd";
  if (id == "linear-l1") return r.attack == NormKind::L1 && !adv && m != "conv-gd";
  if (id == "conv-fourier") return r.attack == NormKind::FourierLinf && !adv;
  if (id == "tradeoff-adv") return adv && param_norm(4) == r.attack;
  if (id == "tradeoff-reg") return prox && dual(param_norm(5)) == r.attack;
  throw InvalidArgument("unknown figure '" + id + "'");
}

}  // namespace detail

// Seed-aggregated rows of one figure panel, in first-appearance order.
inline std::string emit_figure(const std::vector<SweepRecord>& records, const std::string& id) {
  if (std::find(figure_ids().begin(), figure_ids().end(), id) == figure_ids().end()) {
    throw InvalidArgument("unknown figure '" + id + "'");
  }
  struct Acc {
    long count = 0;
    double eps_sum = 0, eps_min = std::numeric_limits<double>::infinity(), eps_max = -std::numeric_limits<double>::infinity();
    double oracle_sum = 0, ratio_sum = 0, ratio_min = std::numeric_limits<double>::infinity();
  };
  std::vector<std::tuple<std::string, NormKind, long>> order;
  std::map<std::tuple<std::string, NormKind, long>, Acc> acc;
  for (const auto& r : records) {
    if (!detail::figure_keeps(id, r)) continue;
    const auto key = std::make_tuple(r.method, r.attack, r.ratio);
    if (!acc.count(key)) order.push_back(key);
    Acc& a = acc[key];
    a.count++;
    a.eps_sum += r.eps_hat;
    a.eps_min = std::min(a.eps_min, r.eps_hat);
    a.eps_max = std::max(a.eps_max, r.eps_hat);
    a.oracle_sum += r.oracle_margin;
    a.ratio_sum += r.ratio_to_oracle;
    a.ratio_min = std::min(a.ratio_min, r.ratio_to_oracle);
  }
  std::string out =
      "figure,method,attack,ratio,seeds,eps_hat_mean,eps_hat_min,eps_hat_max,oracle_margin_mean,ratio_to_oracle_mean,"
      "ratio_to_oracle_min\n";
  for (const auto& key : order) {
    const Acc& a = acc[key];
    const double c = static_cast<double>(a.count);
    out += id + "," + std::get<0>(key) + "," + to_string(std::get<1>(key)) + "," + std::to_string(std::get<2>(key)) +
           "," + std::to_string(a.count) + "," + format_double(a.eps_sum / c) + "," + format_double(a.eps_min) + "," +
           format_double(a.eps_max) + "," + format_double(a.oracle_sum / c) + "," + format_double(a.ratio_sum / c) +
           "," + format_double(a.ratio_min) + "\n";
  }
  return out;
}

}  // namespace maxrobust
