// maxrobust: dataset generation, training, attacks, oracle solves and sweeps.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error,
// 4 output contains a non-converged oracle solve.

#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "maxrobust/maxrobust.hpp"

namespace mr = maxrobust;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitOracle = 4;

std::string margins_json(const mr::Model& model, const mr::Dataset& ds, bool exclude_bias) {
  nlohmann::json j;
  j["kind"] = mr::model_kind(model);
  for (mr::NormKind k : mr::kAllNorms) {
    try {
      j["margin_" + mr::column_name(k)] = mr::margin(model, ds, k, exclude_bias);
    } catch (const mr::UndefinedMarginError&) {
      j["margin_" + mr::column_name(k)] = nullptr;
    }
  }
  return j.dump();
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    mr::detail::write_text(path, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maxrobust: optimizer implicit bias and maximal adversarial robustness of linear models"};
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags override it");
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a Gaussian linearly separable dataset");
  long g_d = 100, g_n = 0, g_ratio = 0;
  std::uint64_t g_seed = 0;
  bool g_no_augment = false;
  std::string g_out;
  gen->add_option("--d", g_d, "Input dimension")->capture_default_str();
  gen->add_option("--n", g_n, "Number of points");
  gen->add_option("--ratio", g_ratio, "Set n = d / ratio instead of --n");
  gen->add_option("--seed", g_seed, "Random seed")->capture_default_str();
  gen->add_flag("--no-augment", g_no_augment, "Do not append the constant bias coordinate");
  gen->add_option("--out", g_out, "Output dataset file")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model and write it with its trace");
  std::string t_data, t_method = "gd", t_out, t_trace, t_loss = "exponential", t_reg = "l1", t_attack = "linf";
  mr::TrainConfig tc;
  double t_lambda = 1e-6, t_eps = 0.0, t_ls_max = 0.0;
  std::optional<double> t_step;
  train->add_option("--data", t_data, "Dataset file")->required();
  train->add_option("--method", t_method, "gd|signgd|cd|gd-ls|prox|adv|conv-gd")->capture_default_str();
  train->add_option("--steps", tc.steps, "Iterations")->capture_default_str();
  train->add_option("--step-size", t_step, "Step size (method-specific default)");
  train->add_option("--ls-max", t_ls_max, "Line search max step (gd-ls, default 10)");
  train->add_option("--loss", t_loss, "exponential|logistic")->capture_default_str();
  train->add_option("--reg", t_reg, "Regularizer for prox: l1|l2|linf|fourier-l1")->capture_default_str();
  train->add_option("--lambda", t_lambda, "Regularization strength for prox")->capture_default_str();
  train->add_option("--eps", t_eps, "Adversarial training radius")->capture_default_str();
  train->add_option("--attack", t_attack, "Adversarial training norm")->capture_default_str();
  train->add_option("--record-every", tc.record_every, "Trace cadence")->capture_default_str();
  train->add_option("--seed", tc.seed, "Seed for conv initialization")->capture_default_str();
  train->add_option("--init-scale", tc.init_scale, "Conv init scale")->capture_default_str();
  train->add_option("--layers", tc.layers, "Conv layers")->capture_default_str();
  train->add_option("--out", t_out, "Output model file (JSON)")->required();
  train->add_option("--trace", t_trace, "Trace file (.csv, or .jsonl for JSON lines)");

  // attack
  auto* attack = app.add_subcommand("attack", "Attack every point and write a per-point report");
  std::string a_model, a_data, a_norm = "linf", a_mask, a_out, a_method = "closed";
  mr::AttackConfig ac;
  bool a_unprojected = false;
  attack->add_option("--model", a_model, "Model file")->required();
  attack->add_option("--data", a_data, "Dataset file")->required();
  attack->add_option("--norm", a_norm, "l1|l2|linf|fourier-l1|fourier-linf")->capture_default_str();
  attack->add_option("--eps", ac.eps, "Perturbation radius")->required();
  attack->add_option("--steps", ac.steps, "Iterative attack steps")->capture_default_str();
  attack->add_option("--mask", a_mask, "Fourier band: low:K, high:K or all");
  attack->add_option("--attack-method", a_method, "closed|iterative")->capture_default_str();
  attack->add_flag("--preserve-augmented", ac.preserve_augmented, "Never perturb the bias coordinate");
  attack->add_flag("--unprojected", a_unprojected, "Fourier attack without per-step projection");
  attack->add_option("--out", a_out, "Report CSV (stdout if omitted)");

  // margin
  auto* marg = app.add_subcommand("margin", "Margins of a model under every norm");
  std::string m_model, m_data;
  bool m_exclude_bias = false;
  marg->add_option("--model", m_model, "Model file")->required();
  marg->add_option("--data", m_data, "Dataset file")->required();
  marg->add_flag("--exclude-bias", m_exclude_bias, "Leave the bias coordinate out of the weight norm");

  // oracle
  auto* orc = app.add_subcommand("oracle", "Solve for the maximum-margin classifier");
  std::string o_data, o_attack = "l2", o_out, o_model_out;
  mr::OracleOptions oo;
  orc->add_option("--data", o_data, "Dataset file")->required();
  orc->add_option("--attack", o_attack, "l1|l2|linf|fourier-linf")->capture_default_str();
  orc->add_option("--max-iter", oo.max_iterations, "Iteration cap")->capture_default_str();
  orc->add_option("--tol", oo.tolerance, "Relative duality gap target")->capture_default_str();
  orc->add_option("--out", o_out, "Record CSV (stdout if omitted)");
  orc->add_option("--model-out", o_model_out, "Write the solution as a linear model");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run a (method x attack x ratio x seed) grid");
  mr::SweepSpec ss;
  std::vector<std::string> s_attacks{"l2", "l1", "linf"};
  std::string s_out = "sweep.csv", s_loss = "exponential";
  bool s_no_augment = false;
  sweep->add_option("--d", ss.d, "Dimension")->capture_default_str();
  sweep->add_option("--ratios", ss.ratios, "d/n ratios")->delimiter(',')->capture_default_str();
  sweep->add_option("--seeds", ss.seeds, "Seeds")->delimiter(',')->capture_default_str();
  sweep->add_option("--methods", ss.methods, "Method tokens (see README)")->delimiter(',')->capture_default_str();
  sweep->add_option("--attacks", s_attacks, "Attack norms")->delimiter(',')->capture_default_str();
  sweep->add_option("--steps", ss.steps, "Steepest/conv iterations")->capture_default_str();
  sweep->add_option("--prox-steps", ss.prox_steps, "Proximal iterations per lambda")->capture_default_str();
  sweep->add_option("--adv-steps", ss.adv_steps, "Adversarial training iterations")->capture_default_str();
  sweep->add_option("--lambdas", ss.lambdas, "Regularization path")->delimiter(',')->capture_default_str();
  sweep->add_option("--adv-factors", ss.adv_factors, "Adversarial eps as multiples of the oracle margin")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--gd-step", ss.gd_step)->capture_default_str();
  sweep->add_option("--signgd-step", ss.signgd_step)->capture_default_str();
  sweep->add_option("--cd-step", ss.cd_step)->capture_default_str();
  sweep->add_option("--adv-step", ss.adv_step)->capture_default_str();
  sweep->add_option("--conv-step", ss.conv_step)->capture_default_str();
  sweep->add_option("--conv-init-scale", ss.conv_init_scale)->capture_default_str();
  sweep->add_option("--ls-max", ss.ls_max)->capture_default_str();
  sweep->add_option("--record-every", ss.record_every)->capture_default_str();
  sweep->add_option("--loss", s_loss)->capture_default_str();
  sweep->add_flag("--no-augment", s_no_augment, "Datasets without the bias coordinate");
  sweep->add_option("--workers", ss.workers, "Worker threads (default: MAXROBUST_WORKERS or all cores)");
  sweep->add_option("--out", s_out, "Record CSV; manifest and timing files are written beside it")
      ->capture_default_str();

  // emit-figure
  auto* fig = app.add_subcommand("emit-figure", "Aggregate sweep records into one figure table");
  std::string f_id, f_input, f_out;
  fig->add_option("figure", f_id, "linear-linf|linear-l2|linear-l1|conv-fourier|tradeoff-adv|tradeoff-reg")
      ->required();
  fig->add_option("--input", f_input, "Sweep CSV")->required();
  fig->add_option("--out", f_out, "Output CSV (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));

    if (*gen) {
      if (g_ratio > 0) g_n = std::max(1L, g_d / g_ratio);
      if (g_n < 1) throw mr::InvalidArgument("gen-data: give --n or --ratio");
      const auto ds = mr::generate_gaussian_separable(g_d, g_n, g_seed, !g_no_augment);
      mr::save_dataset(ds, g_out);
      std::cout << "wrote " << g_out << " (n=" << ds.n() << ", dim=" << ds.dim() << ")\n";
      return 0;
    }

    if (*train) {
      const auto ds = mr::load_dataset(t_data);
      tc.loss = mr::parse_loss(t_loss);
      mr::TrainTrace tr;
      auto step_or = [&](double def) { return t_step.value_or(def); };
      if (t_method == "gd" || t_method == "signgd" || t_method == "cd" || t_method == "gd-ls") {
        tc.norm_kind = t_method == "signgd" ? mr::NormKind::Linf
                       : t_method == "cd"   ? mr::NormKind::L1
                                            : mr::NormKind::L2;
        tc.step_size = step_or(t_method == "signgd" ? 0.01 : 0.1);
        if (t_method == "gd-ls") tc.line_search_max = t_ls_max > 0 ? t_ls_max : 10.0;
        tr = mr::train_steepest(ds, tc);
      } else if (t_method == "prox") {
        tc.step_size = step_or(1.0);
        tc.reg = mr::RegSpec{mr::parse_norm_kind(t_reg), t_lambda};
        tr = mr::train_proximal(ds, tc);
      } else if (t_method == "adv") {
        tc.step_size = step_or(0.1);
        tr = mr::adversarial_training_linear(ds, t_eps, mr::parse_norm_kind(t_attack), tc);
      } else if (t_method == "conv-gd") {
        tc.step_size = step_or(0.01);
        tr = mr::train_conv_gd(ds, tc);
      } else {
        throw mr::InvalidArgument("unknown training method '" + t_method + "'");
      }
      mr::save_model(tr.model, t_out);
      if (!t_trace.empty()) mr::save_trace(tr, t_trace);
      std::cout << margins_json(tr.model, ds, false) << "\n";
      return 0;
    }

    if (*attack) {
      const auto model = mr::load_model(a_model);
      const auto ds = mr::load_dataset(a_data);
      ac.norm = mr::parse_norm_kind(a_norm);
      ac.project = !a_unprojected;
      if (a_method == "closed") {
        ac.method = mr::AttackMethod::ClosedForm;
      } else if (a_method == "iterative") {
        ac.method = mr::AttackMethod::Iterative;
      } else {
        throw mr::InvalidArgument("unknown attack method '" + a_method + "'");
      }
      if (!a_mask.empty()) ac.band_mask = mr::parse_band_mask(a_mask, ac.preserve_augmented ? ds.dim() - 1 : ds.dim());
      ac.validate();
      const auto rows = mr::attack_report(model, ds, ac);
      write_or_print(a_out, mr::attack_report_to_csv(rows));
      std::cerr << "robust_error " << mr::robust_error(model, ds, ac) << "\n";
      return 0;
    }

    if (*marg) {
      const auto model = mr::load_model(m_model);
      const auto ds = mr::load_dataset(m_data);
      std::cout << margins_json(model, ds, m_exclude_bias) << "\n";
      return 0;
    }

    if (*orc) {
      const auto ds = mr::load_dataset(o_data);
      const mr::NormKind att = mr::parse_norm_kind(o_attack);
      const auto sol = mr::min_norm_solve(ds, att, oo);
      mr::SweepRecord rec;
      rec.method = "oracle";
      rec.attack = att;
      rec.d = ds.input_dim();
      rec.n = ds.n();
      rec.ratio = ds.n() > 0 ? ds.input_dim() / ds.n() : 0;
      rec.seed = ds.seed;
      rec.margin = sol.max_margin;
      rec.oracle_margin = sol.max_margin;
      rec.ratio_to_oracle = 1.0;
      rec.steps = sol.iterations;
      rec.oracle_converged = sol.converged;
      rec.status = sol.converged ? "ok" : "oracle-nonconverged";
      if (sol.converged) {
        mr::AttackConfig cfg;
        cfg.norm = att;
        rec.eps_hat = mr::max_robust_eps(mr::LinearModel{sol.w}, ds, cfg);
      }
      write_or_print(o_out, mr::sweep_records_to_csv({rec}));
      if (!o_model_out.empty()) mr::save_model(mr::LinearModel{sol.w}, o_model_out);
      std::cerr << "objective " << mr::format_double(sol.objective) << " lower_bound "
                << mr::format_double(sol.lower_bound) << " kkt_residual " << mr::format_double(sol.kkt_residual)
                << " iterations " << sol.iterations << "\n";
      return sol.converged ? 0 : kExitOracle;
    }

    if (*sweep) {
      ss.attacks.clear();
      for (const auto& a : s_attacks) ss.attacks.push_back(mr::parse_norm_kind(a));
      ss.loss = mr::parse_loss(s_loss);
      ss.augment = !s_no_augment;
      const auto res = mr::run_sweep(ss);
      mr::write_sweep_outputs(ss, res, s_out);
      std::cout << "wrote " << res.records.size() << " records to " << s_out << " (spec " << mr::sweep_spec_hash(ss)
                << ")\n";
      if (res.oracle_nonconverged > 0) {
        std::cerr << res.oracle_nonconverged << " oracle solve(s) did not converge; rows are flagged\n";
        return kExitOracle;
      }
      return 0;
    }

    if (*fig) {
      write_or_print(f_out, mr::emit_figure(mr::load_sweep_records(f_input), f_id));
      return 0;
    }
  } catch (const mr::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mr::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
