// Command-line front end: estimate | simulate | test | weights.
//
// Every run is reproducible from (config file, seed); the config digest is
// embedded in all JSON artifacts. Numeric JSON fields carry 12 significant
// digits; human tables print 4.

#include <CLI11.hpp>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>

#include "effdid/inference.hpp"
#include "effdid/rng.hpp"
#include "effdid/run_config.hpp"
#include "effdid/simulation.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace effdid;

namespace {

double round12(double x) {
  if (!std::isfinite(x)) return x;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return std::strtod(buf, nullptr);
}

std::string fmt4(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

std::string cohort_label(int g) { return is_never(g) ? "inf" : std::to_string(g); }

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("IO", "cannot write '" + path.string() + "'");
  out << contents;
}

void write_weights_csv(const fs::path& path, const std::vector<WeightRow>& rows) {
  std::ostringstream os;
  os << "target_g,target_t,comp_g,base_t,mean_weight\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.12g", r.mean_weight);
    os << r.target_g << ',' << r.target_t << ',' << cohort_label(r.comp_g) << ','
       << r.base_t << ',' << buf << '\n';
  }
  write_file(path, os.str());
}

PanelDataset load_dataset(const RunConfig& cfg) {
  if (cfg.input_path.empty()) throw Error("CONFIG", "--input is required");
  CsvSchema schema;
  schema.n_covariates = cfg.covariates;
  schema.treatment = cfg.treatment_col;
  PanelDataset ds = load_long_csv(cfg.input_path, schema);

  ValidationOptions opts;
  opts.min_cell_size = cfg.min_cell;
  opts.efficient_mode = cfg.estimator == "efficient" || cfg.estimand == "latt";
  ValidationReport rep = validate(ds, opts);
  bool relabeled = false;
  for (const auto& w : rep.warnings) {
    if (w.code == "NO_NEVER_COHORT") {
      ds = relabel_terminal_cohort(ds);
      relabeled = true;
      std::cerr << "note: all units eventually treated; dropped the terminal "
                   "cohort's periods and relabeled it never-treated\n";
    } else {
      std::cerr << "warning: " << w.code << ": " << w.message << "\n";
    }
  }
  if (relabeled) rep = validate(ds, opts);
  if (!rep.ok())
    throw Error("VALIDATION", rep.errors.front().code + ": " + rep.errors.front().message);
  return ds;
}

EstimatorConfig make_estimator_config(const RunConfig& cfg) {
  EstimatorConfig ec;
  if (cfg.regime == "pt-all")
    ec.regime = PtRegime::pt_all;
  else if (cfg.regime == "pt-post")
    ec.regime = PtRegime::pt_post;
  else
    throw Error("CONFIG", "regime must be pt-all or pt-post");
  if (cfg.mode == "cond")
    ec.nuisance.mode = NuisanceMode::conditional;
  else if (cfg.mode != "uncond")
    throw Error("CONFIG", "mode must be uncond or cond");
  ec.nuisance.sieve.k_grid = cfg.k_grid;
  if (cfg.basis != "poly")
    throw Error("CONFIG", "nuisance.basis: only 'poly' is supported");
  if (cfg.cn == "bic")
    ec.nuisance.sieve.use_bic = true;
  else if (cfg.cn != "aic")
    throw Error("CONFIG", "nuisance.cn must be aic or bic");
  ec.nuisance.sieve.bandwidth = cfg.bandwidth;
  ec.nuisance.sieve.ratio_floor = cfg.ratio_floor;
  ec.nuisance.sieve.m_terms = cfg.m_terms;
  ec.min_cell = cfg.min_cell;
  return ec;
}

Estimate dispatch_estimate(const PanelDataset& ds, const RunConfig& cfg,
                           const EstimatorConfig& ec) {
  const std::string& which = cfg.estimator;
  if (cfg.estimand == "att") {
    if (cfg.att_g == 0 || cfg.att_t == 0) throw Error("CONFIG", "--att G T is required");
    if (which == "efficient") return estimate_att_efficient(ds, cfg.att_g, cfg.att_t, ec);
    if (which == "cs-never") return estimate_cs(ds, cfg.att_g, cfg.att_t, CsComparison::never, ec);
    if (which == "cs-notyet") return estimate_cs(ds, cfg.att_g, cfg.att_t, CsComparison::not_yet, ec);
    if (which == "imputation") return estimate_imputation_att(ds, cfg.att_g, cfg.att_t);
    throw Error("CONFIG", "estimator '" + which + "' does not target att(g,t)");
  }
  if (cfg.estimand == "es") {
    if (which == "efficient") return estimate_es(ds, cfg.es_e, ec);
    if (which == "dtwfe") return estimate_twfe_dynamic(ds, cfg.es_e);
    if (which == "cs-never") return estimate_cs_es(ds, cfg.es_e, CsComparison::never, ec);
    if (which == "cs-notyet") return estimate_cs_es(ds, cfg.es_e, CsComparison::not_yet, ec);
    if (which == "imputation") return estimate_imputation_es(ds, cfg.es_e);
    throw Error("CONFIG", "estimator '" + which + "' does not target es(e)");
  }
  if (cfg.estimand == "es-avg") {
    if (which == "efficient") return estimate_es_avg(ds, ec);
    if (which == "twfe") return estimate_twfe_static(ds);
    if (which == "dtwfe") return estimate_twfe_dynamic_avg(ds);
    if (which == "cs-never") return estimate_cs_es_avg(ds, CsComparison::never, ec);
    if (which == "cs-notyet") return estimate_cs_es_avg(ds, CsComparison::not_yet, ec);
    if (which == "imputation") return estimate_imputation_es_avg(ds);
    throw Error("CONFIG", "estimator '" + which + "' does not target es-avg");
  }
  throw Error("CONFIG", "estimand must be att, es, es-avg, or latt");
}

ordered_json weights_json(const std::vector<WeightRow>& rows) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json w;
    w["target_g"] = r.target_g;
    w["target_t"] = r.target_t;
    w["comp_g"] = cohort_label(r.comp_g);
    w["base_t"] = r.base_t;
    w["weight"] = round12(r.mean_weight);
    arr.push_back(w);
  }
  return arr;
}

int cmd_estimate(const RunConfig& cfg) {
  const PanelDataset ds = load_dataset(cfg);
  const EstimatorConfig ec = make_estimator_config(cfg);

  ordered_json out;
  double point;
  if (cfg.estimand == "latt") {
    if (cfg.att_g == 0 || cfg.att_t == 0) throw Error("CONFIG", "--latt G T is required");
    const LattEstimate latt = estimate_latt(ds, cfg.att_g, cfg.att_t);
    point = latt.ratio;
    out["estimand"] = "latt(" + std::to_string(cfg.att_g) + "," + std::to_string(cfg.att_t) + ")";
    out["estimator"] = "efficient";
    out["point"] = round12(latt.ratio);
    out["numerator"] = round12(latt.numerator);
    out["denominator"] = round12(latt.denominator);
    out["se_analytic"] = round12(latt.se);
    out["ci_lo"] = round12(latt.ci_lo);
    out["ci_hi"] = round12(latt.ci_hi);
    out["weights"] = ordered_json::array();
    out["n"] = latt.n;
  } else {
    Estimate est = dispatch_estimate(ds, cfg, ec);
    if (cfg.bootstrap_enabled) {
      BootstrapConfig bc;
      bc.replications = cfg.bootstrap_reps;
      bc.seed = cfg.seed;
      bc.min_cell = cfg.min_cell;
      bc.threads = cfg.threads;
      bc.refit_nuisances = cfg.bootstrap_refit;
      Eigen::VectorXd pt(1);
      pt[0] = est.point;
      BootstrapResult br;
      if (cfg.bootstrap_scheme == "multiplier") {
        if (est.eif.size() == 0)
          throw Error("CONFIG", "multiplier bootstrap needs an influence representation");
        bc.scheme = BootstrapConfig::Scheme::multiplier;
        bc.multiplier = cfg.bootstrap_multiplier == "rademacher"
                            ? BootstrapConfig::MultiplierLaw::rademacher
                            : BootstrapConfig::MultiplierLaw::normal;
        br = multiplier_bootstrap(est.eif, pt, bc);
      } else if (cfg.bootstrap_scheme == "cluster" && !cfg.bootstrap_refit) {
        if (est.eif.size() == 0)
          throw Error("CONFIG",
                      "refit-free bootstrap needs an influence representation");
        Eigen::MatrixXd eifs(est.eif.size(), 1);
        eifs.col(0) = est.eif;
        br = cluster_bootstrap_frozen(eifs, pt, bc);
      } else if (cfg.bootstrap_scheme == "cluster") {
        RunConfig inner = cfg;
        inner.bootstrap_enabled = false;
        br = cluster_bootstrap(
            ds,
            [&](const PanelDataset& bs) {
              Eigen::VectorXd v(1);
              v[0] = dispatch_estimate(bs, inner, ec).point;
              return v;
            },
            pt, bc);
      } else {
        throw Error("CONFIG", "bootstrap.scheme must be cluster or multiplier");
      }
      if (br.redraw_warning)
        std::cerr << "warning: " << br.redraws << " bootstrap redraws (>10% of draws)\n";
      est.se_bootstrap = br.se[0];
      if (cfg.percentile_ci) {
        est.ci_lo = br.ci_lo_pct[0];
        est.ci_hi = br.ci_hi_pct[0];
      } else {
        est.ci_lo = br.ci_lo_normal[0];
        est.ci_hi = br.ci_hi_normal[0];
      }
    }
    point = est.point;
    out["estimand"] = est.estimand;
    out["estimator"] = est.estimator;
    out["point"] = round12(est.point);
    if (est.se_analytic) out["se_analytic"] = round12(*est.se_analytic);
    if (est.se_bootstrap) out["se_bootstrap"] = round12(*est.se_bootstrap);
    if (est.ci_lo) out["ci_lo"] = round12(*est.ci_lo);
    if (est.ci_hi) out["ci_hi"] = round12(*est.ci_hi);
    out["weights"] = weights_json(est.weights);
    out["n"] = est.n;
    if (cfg.weights_csv)
      write_weights_csv(fs::path(cfg.out_dir) / "weights.csv", est.weights);
  }
  out["config_digest"] = config_digest(cfg);

  fs::create_directories(cfg.out_dir);
  write_file(fs::path(cfg.out_dir) / "result.json", out.dump(2) + "\n");

  std::cout << out["estimand"].get<std::string>() << " ["
            << out["estimator"].get<std::string>() << "]\n";
  std::cout << "  point    " << fmt4(point) << "\n";
  if (out.contains("se_analytic"))
    std::cout << "  se       " << fmt4(out["se_analytic"].get<double>()) << "\n";
  if (out.contains("se_bootstrap"))
    std::cout << "  se_boot  " << fmt4(out["se_bootstrap"].get<double>()) << "\n";
  if (out.contains("ci_lo"))
    std::cout << "  ci95     [" << fmt4(out["ci_lo"].get<double>()) << ", "
              << fmt4(out["ci_hi"].get<double>()) << "]\n";
  return 0;
}

std::vector<EstimatorKind> parse_estimators(const std::string& csv) {
  std::vector<EstimatorKind> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "edid") out.push_back(EstimatorKind::edid);
    else if (item == "twfe") out.push_back(EstimatorKind::twfe);
    else if (item == "dtwfe") out.push_back(EstimatorKind::dtwfe);
    else if (item == "cs-sa") out.push_back(EstimatorKind::cs_never);
    else if (item == "cs-dcdh") out.push_back(EstimatorKind::cs_notyet);
    else if (item == "bjs-g-w") out.push_back(EstimatorKind::imputation);
    else if (!item.empty()) throw Error("CONFIG", "unknown estimator '" + item + "'");
  }
  if (out.empty()) throw Error("CONFIG", "empty estimator list");
  return out;
}

int cmd_simulate(const RunConfig& cfg) {
  if (cfg.sim_reps < 2) throw Error("CONFIG", "sim.reps must be at least 2");
  McConfig mc;
  mc.replications = cfg.sim_reps;
  mc.seed = cfg.seed;
  mc.threads = cfg.threads;
  mc.estimators = parse_estimators(cfg.sim_estimators);

  McReport report;
  PanelDataset first_panel;
  if (cfg.dgp == "staggered") {
    StaggeredDgp dgp;
    if (cfg.sim_n > 0) dgp.n = cfg.sim_n;
    dgp.rho = cfg.rho;
    dgp.sigma = cfg.sim_sigma;
    dgp.sd_innov = cfg.sim_sd_innov;
    dgp.sd_unit_fe = cfg.sim_sd_unit_fe;
    dgp.sd_time_fe = cfg.sim_sd_time_fe;
    if (!cfg.sim_residual_pool.empty()) {
      std::ifstream pool(cfg.sim_residual_pool);
      if (!pool) throw Error("IO", "cannot open '" + cfg.sim_residual_pool + "'");
      double v;
      while (pool >> v) dgp.residual_pool.push_back(v);
      if (dgp.residual_pool.empty())
        throw Error("CONFIG", "residual pool file is empty");
    }
    report = run_monte_carlo(dgp, mc);
    first_panel = gen_staggered(dgp, derive_seed(cfg.seed, 0)).data;
  } else if (cfg.dgp == "single-date") {
    SingleDateDgp dgp;
    if (cfg.sim_n > 0) dgp.n = cfg.sim_n;
    if (cfg.sd_outcome_model == "no-corr") dgp.serial_corr = false;
    else if (cfg.sd_outcome_model == "no-m") dgp.with_m = false;
    else if (cfg.sd_outcome_model == "no-f") dgp.with_f = false;
    else if (cfg.sd_outcome_model == "only-noise") { dgp.with_m = false; dgp.with_f = false; }
    else if (cfg.sd_outcome_model != "baseline")
      throw Error("CONFIG", "unknown outcome model '" + cfg.sd_outcome_model + "'");
    if (cfg.sd_assignment == "random") dgp.assignment = SingleDateDgp::Assignment::random;
    else if (cfg.sd_assignment != "logistic")
      throw Error("CONFIG", "assignment must be logistic or random");
    report = run_monte_carlo(dgp, mc);
    first_panel = gen_single_date(dgp, derive_seed(cfg.seed, 0)).data;
  } else {
    throw Error("CONFIG", "sim.dgp must be staggered or single-date");
  }

  fs::create_directories(cfg.out_dir);
  {
    std::ostringstream os;
    os << "estimator,bias,rmse,rel_rmse,coverage,ci_length,rel_ci_length,failures,flagged\n";
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.12g", v);
      return std::string(buf);
    };
    for (const auto& r : report.rows) {
      os << estimator_name(r.estimator) << ',' << num(r.bias) << ',' << num(r.rmse)
         << ',' << num(r.rel_rmse) << ',' << num(r.coverage) << ',' << num(r.ci_length)
         << ',' << num(r.rel_ci_length) << ',' << r.failures << ','
         << (r.flagged ? "true" : "false") << '\n';
    }
    write_file(fs::path(cfg.out_dir) / "mc_report.csv", os.str());
  }
  {
    ordered_json out;
    out["dgp"] = report.dgp_label;
    out["estimand"] = report.estimand;
    out["truth"] = round12(report.truth);
    out["replications"] = report.replications;
    out["seed"] = report.seed;
    ordered_json rows = ordered_json::array();
    for (const auto& r : report.rows) {
      ordered_json jr;
      jr["estimator"] = estimator_name(r.estimator);
      jr["bias"] = round12(r.bias);
      jr["rmse"] = round12(r.rmse);
      jr["rel_rmse"] = round12(r.rel_rmse);
      jr["coverage"] = round12(r.coverage);
      jr["ci_length"] = round12(r.ci_length);
      jr["rel_ci_length"] = round12(r.rel_ci_length);
      jr["failures"] = r.failures;
      jr["flagged"] = r.flagged;
      rows.push_back(jr);
    }
    out["rows"] = rows;
    out["config_digest"] = config_digest(cfg);
    write_file(fs::path(cfg.out_dir) / "mc_report.json", out.dump(2) + "\n");
  }
  write_weights_csv(fs::path(cfg.out_dir) / "heatmap.csv", heatmap_weights(first_panel));

  std::cout << report.dgp_label << "  truth=" << fmt4(report.truth)
            << "  R=" << report.replications << "\n";
  std::cout << "estimator   bias      rmse      rel_rmse  coverage\n";
  for (const auto& r : report.rows) {
    std::printf("%-10s  %-8s  %-8s  %-8s  %-8s%s\n", estimator_name(r.estimator).c_str(),
                fmt4(r.bias).c_str(), fmt4(r.rmse).c_str(), fmt4(r.rel_rmse).c_str(),
                fmt4(r.coverage).c_str(), r.flagged ? "  [flagged]" : "");
  }
  return 0;
}

int cmd_test(const RunConfig& cfg) {
  const PanelDataset ds = load_dataset(cfg);
  const EstimatorConfig ec = make_estimator_config(cfg);
  fs::create_directories(cfg.out_dir);
  ordered_json out;
  out["test"] = cfg.test_kind;

  if (cfg.test_kind == "hausman") {
    TestResult res;
    if (cfg.test_degenerate) {
      EstimatorConfig jid = ec;
      jid.regime = PtRegime::pt_post;
      const EfficientRun run = run_efficient(ds, jid);
      Eigen::VectorXd es(run.horizons.size());
      Eigen::MatrixXd eif(ds.n(), run.horizons.size());
      for (std::size_t j = 0; j < run.horizons.size(); ++j) {
        es[j] = run.es.at(run.horizons[j]).es;
        eif.col(j) = run.es.at(run.horizons[j]).eif;
      }
      res = hausman_statistic(es, es, eif, eif);
    } else {
      res = hausman_test(ds, ec);
    }
    out["stat"] = round12(res.stat);
    out["df"] = res.df;
    out["pvalue"] = round12(res.pvalue);
    out["repaired"] = res.repaired;
    std::cout << "hausman: stat=" << fmt4(res.stat) << " df=" << res.df
              << " p=" << fmt4(res.pvalue) << (res.repaired ? " [repaired]" : "") << "\n";
  } else if (cfg.test_kind == "holm") {
    const HolmSelection sel = holm_incremental_selection(ds, cfg.alpha, ec);
    ordered_json rows = ordered_json::array();
    std::vector<const IncrementalRestriction*> sorted;
    for (const auto& r : sel.restrictions) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](auto* a, auto* b) { return a->test.pvalue < b->test.pvalue; });
    for (const auto* r : sorted) {
      ordered_json jr;
      jr["comp_g"] = r->comp_g;
      jr["base_t"] = r->base_t;
      jr["stat"] = round12(r->test.stat);
      jr["df"] = r->test.df;
      jr["pvalue"] = round12(r->test.pvalue);
      jr["repaired"] = r->test.repaired;
      jr["rejected"] = r->rejected;
      rows.push_back(jr);
      std::cout << "  (g'=" << r->comp_g << ", t'=" << r->base_t
                << ")  p=" << fmt4(r->test.pvalue)
                << (r->rejected ? "  rejected" : "  kept") << "\n";
    }
    out["restrictions"] = rows;
    ordered_json surv = ordered_json::array();
    for (const auto& [g, t] : sel.surviving) surv.push_back({{"comp_g", g}, {"base_t", t}});
    out["surviving"] = surv;
    out["alpha"] = round12(cfg.alpha);
  } else if (cfg.test_kind == "placebo") {
    if (cfg.placebo_g == 0 || cfg.placebo_t == 0)
      throw Error("CONFIG", "--placebo G T is required");
    PlaceboConfig pc;
    pc.baseline_t = cfg.placebo_baseline;
    if (cfg.placebo_comparison != "inf" && !cfg.placebo_comparison.empty())
      pc.comparison_g = static_cast<int>(std::stol(cfg.placebo_comparison));
    const Estimate est = placebo_pretrends(ds, cfg.placebo_g, cfg.placebo_t, pc, ec);
    out["estimand"] = est.estimand;
    out["point"] = round12(est.point);
    out["se_analytic"] = round12(*est.se_analytic);
    out["ci_lo"] = round12(*est.ci_lo);
    out["ci_hi"] = round12(*est.ci_hi);
    std::cout << est.estimand << ": point=" << fmt4(est.point)
              << " se=" << fmt4(*est.se_analytic) << "\n";
  } else {
    throw Error("CONFIG", "test.kind must be hausman, holm, or placebo");
  }
  out["config_digest"] = config_digest(cfg);
  write_file(fs::path(cfg.out_dir) / "test.json", out.dump(2) + "\n");
  return 0;
}

int cmd_weights(const RunConfig& cfg) {
  const PanelDataset ds = load_dataset(cfg);
  const EstimatorConfig ec = make_estimator_config(cfg);
  fs::create_directories(cfg.out_dir);
  write_weights_csv(fs::path(cfg.out_dir) / "weights.csv", heatmap_weights(ds, ec));
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "weights.csv").string() << "\n";
  return 0;
}

// Flag values are captured as strings and replayed through the shared config
// layer, so file/flag precedence and validation live in one place.
class FlagCapture {
public:
  explicit FlagCapture(CLI::App* sub) : sub_(sub) {}

  CLI::App* sub() { return sub_; }

  void add(const std::string& flag, const std::string& key, const std::string& help) {
    storage_.emplace_back();
    captured_.push_back({key, &storage_.back()});
    sub_->add_option(flag, storage_.back(), help);
  }
  void add_flag(const std::string& flag, const std::string& key, const std::string& help) {
    storage_.emplace_back();
    auto* slot = &storage_.back();
    captured_.push_back({key, slot});
    sub_->add_flag_callback(flag, [slot] { *slot = "true"; }, help);
  }
  void add_config_flag() {
    sub_->add_option("--config", config_path_, "key = value config file");
  }

  bool provided(const std::string& key) const {
    for (const auto& [k, v] : captured_)
      if (k == key && !v->empty()) return true;
    return false;
  }

  void apply(RunConfig& cfg) const {
    if (!config_path_.empty()) apply_config_file(cfg, config_path_);
    for (const auto& [key, value] : captured_)
      if (!value->empty()) apply_config_kv(cfg, key, *value);
  }

private:
  CLI::App* sub_;
  std::deque<std::string> storage_;
  std::vector<std::pair<std::string, std::string*>> captured_;
  std::string config_path_;
};

void add_common(FlagCapture& fc) {
  fc.add_config_flag();
  fc.add("--input", "input", "long-format CSV (unit,period,outcome,cohort[,x1..xd][,d])");
  fc.add("--out", "out", "output directory (default .)");
  fc.add("--seed", "seed", "RNG seed (default 0)");
  fc.add("--threads", "threads", "worker threads; 0 = available parallelism");
  fc.add("--covariates", "covariates", "number of covariate columns x1..xd");
  fc.add("--treatment-col", "treatment-col", "treatment column name (IV mode)");
  fc.add("--min-cell", "min-cell", "minimum cohort cell size (default 2)");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"effdid: semiparametrically efficient difference-in-differences "
               "and event-study estimation"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::vector<int> att_pair, latt_pair, placebo_pair;
  bool es_avg_flag = false;

  FlagCapture est{app.add_subcommand("estimate", "estimate ATT/ES/ES-avg/LATT")};
  add_common(est);
  est.sub()->add_option("--att", att_pair, "target ATT(G,T)")->expected(2);
  est.sub()->add_option("--latt", latt_pair, "target LATT(G,T) (IV mode)")->expected(2);
  est.sub()->add_flag("--es-avg", es_avg_flag, "target the ES average (default)");
  est.add("--es", "es.e", "target event-study horizon e");
  est.add("--estimator", "estimator",
          "efficient|twfe|dtwfe|cs-never|cs-notyet|imputation (default efficient)");
  est.add("--regime", "regime", "pt-all | pt-post (default pt-all)");
  est.add("--mode", "mode", "uncond | cond (default uncond)");
  est.add("--bootstrap", "bootstrap.reps", "bootstrap replications (enables the bootstrap)");
  est.add("--bootstrap-scheme", "bootstrap.scheme", "cluster | multiplier");
  est.add_flag("--percentile", "ci.percentile", "percentile bootstrap CI");
  est.add_flag("--weights-csv", "weights-csv", "also export the weight table CSV");

  FlagCapture sim{app.add_subcommand("simulate", "Monte Carlo comparison harness")};
  add_common(sim);
  sim.add("--dgp", "sim.dgp", "staggered | single-date");
  sim.add("--rho", "sim.rho", "AR(1) coefficient of the staggered errors");
  sim.add("--reps", "sim.reps", "Monte Carlo replications (default 200)");
  sim.add("--n", "sim.n", "cross-section size override");
  sim.add("--estimators", "sim.estimators",
          "comma list: edid,twfe,dtwfe,cs-sa,cs-dcdh,bjs-g-w");
  sim.add("--residual-pool", "sim.residual-pool",
          "file of innovation draws, one per line (staggered)");
  sim.add("--outcome-model", "sim.outcome-model",
          "baseline|no-corr|no-m|no-f|only-noise (single-date)");
  sim.add("--assignment", "sim.assignment", "logistic | random (single-date)");

  FlagCapture tst{app.add_subcommand("test", "specification tests")};
  add_common(tst);
  tst.add("--test", "test.kind", "hausman | holm | placebo");
  tst.add("--alpha", "test.alpha", "family-wise error rate (default 0.05)");
  tst.sub()->add_option("--placebo", placebo_pair, "placebo target (G,T), T < G")->expected(2);
  tst.add("--baseline", "placebo.baseline", "placebo baseline period");
  tst.add("--comparison", "placebo.comparison", "placebo comparison cohort or 'inf'");
  tst.add_flag("--degenerate", "test.degenerate", "compare a regime with itself (smoke check)");
  tst.add("--regime", "regime", "pt-all | pt-post");
  tst.add("--mode", "mode", "uncond | cond");

  FlagCapture wts{app.add_subcommand("weights", "export efficiency-weight heatmap CSV")};
  add_common(wts);
  wts.add("--regime", "regime", "pt-all | pt-post");
  wts.add("--mode", "mode", "uncond | cond");

  CLI11_PARSE(app, argc, argv);

  try {
    if (est.sub()->parsed()) {
      cfg.command = "estimate";
      est.apply(cfg);
      if (!att_pair.empty()) {
        cfg.estimand = "att";
        cfg.att_g = att_pair[0];
        cfg.att_t = att_pair[1];
      } else if (!latt_pair.empty()) {
        cfg.estimand = "latt";
        cfg.att_g = latt_pair[0];
        cfg.att_t = latt_pair[1];
      } else if (est.provided("es.e")) {
        cfg.estimand = "es";
      } else if (cfg.estimand.empty() || es_avg_flag) {
        cfg.estimand = "es-avg";
      }
      if (est.provided("bootstrap.reps")) cfg.bootstrap_enabled = true;
      return cmd_estimate(cfg);
    }
    if (sim.sub()->parsed()) {
      cfg.command = "simulate";
      sim.apply(cfg);
      return cmd_simulate(cfg);
    }
    if (tst.sub()->parsed()) {
      cfg.command = "test";
      tst.apply(cfg);
      if (!placebo_pair.empty()) {
        cfg.test_kind = "placebo";
        cfg.placebo_g = placebo_pair[0];
        cfg.placebo_t = placebo_pair[1];
      }
      return cmd_test(cfg);
    }
    if (wts.sub()->parsed()) {
      cfg.command = "weights";
      wts.apply(cfg);
      return cmd_weights(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    static const std::set<std::string> config_codes = {
        "CONFIG", "IO", "SCHEMA", "PARSE", "UNBALANCED_PANEL", "DUPLICATE_CELL",
        "INVALID_COHORT", "VALIDATION", "EMPTY", "SMALL_COHORT"};
    return config_codes.count(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
