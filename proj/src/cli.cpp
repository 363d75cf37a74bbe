#include "rtr/cli.hpp"

#include "rtr/dataset_io.hpp"
#include "rtr/diagnostics.hpp"
#include "rtr/moments.hpp"
#include "rtr/parallel.hpp"
#include "rtr/robust_init.hpp"
#include "rtr/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace rtr::cli {

namespace {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Schemas

std::vector<ConfigKey> synthetic_keys(const std::string& dims, const std::string& noise, const std::string& noise_param,
                                      const std::string& n_per_df)
{
  return {
      {"dims", dims, "tensor dimensions p1,p2,p3"},
      {"ranks", "2,2,2", "multilinear ranks r1,r2,r3 of the target"},
      {"n", "auto", "sample size; auto uses round(n_per_df * df)"},
      {"n_per_df", n_per_df, "sample size as a multiple of df = r1 r2 r3 + sum p_k r_k"},
      {"noise", noise, "none, gaussian, student_t, pareto_centered or lognormal_centered"},
      {"noise_param", noise_param, "degrees of freedom, tail index or log-scale of the noise family"},
      {"noise_scale", "1", "multiplier applied to noise draws"},
      {"lambda_min", "2", "lower bound on the target's unfolding singular values"},
      {"lambda_max", "3", "upper bound on the target's unfolding singular values"},
      {"contamination_fraction", "0", "fraction of responses multiplied by contamination_factor"},
      {"contamination_factor", "1", "multiplier for contaminated responses"},
  };
}

std::vector<ConfigKey> estimator_keys()
{
  return {
      {"estimator", "robust", "robust or least_squares"},
      {"delta", "1", "moment exponent: the noise has a finite (1+delta)-th moment"},
      {"moment", "plugin", "noise moment in the threshold rule: plugin, oracle or a number"},
      {"t_max", "400", "maximum gradient iterations"},
      {"rel_tol", "1e-8", "stop when the objective changes by less than rel_tol * max(1, objective)"},
  };
}

std::vector<ConfigKey> concat(std::initializer_list<std::vector<ConfigKey>> parts)
{
  std::vector<ConfigKey> out{{"seed", "0", "master seed; --seed overrides"}};
  for (const auto& p : parts)
    out.insert(out.end(), p.begin(), p.end());
  return out;
}

const std::map<std::string, std::vector<ConfigKey>, std::less<>>& schemas()
{
  static const std::map<std::string, std::vector<ConfigKey>, std::less<>> s{
      {"simulate", concat({synthetic_keys("8,8,8", "gaussian", "0", "20")})},
      {"fit", concat({{{"data", "", "dataset file; empty generates the synthetic dataset inline"}},
                      synthetic_keys("8,8,8", "gaussian", "0", "20"),
                      {{"fit_ranks", "spec", "ranks to fit: spec, select or r1,r2,r3"}},
                      estimator_keys(),
                      {{"tau", "auto", "response truncation level: auto, inf or a number"},
                       {"varpi", "auto", "Huber threshold: auto, inf or a number"},
                       {"eta", "auto", "step size: auto or a number"},
                       {"max_step_halvings", "5", "step halvings allowed after divergence"}}})},
      {"benchmark", concat({synthetic_keys("8,8,8", "student_t", "3", "5,10,20,40"), estimator_keys(),
                            {{"reps", "20", "replicates per cell"},
                             {"record_runtime", "false", "write wall-clock runtime (breaks byte-identical reruns)"},
                             {"tidy_out", "", "optional path for a long-format CSV (cell, rep, n, metric, value)"}}})},
      {"rank-select", concat({{{"data", "", "dataset file; empty generates the synthetic dataset inline"}},
                              synthetic_keys("8,8,8", "student_t", "3", "50"),
                              {{"ratio", "0.1", "singular values below ratio * largest are not counted"},
                               {"noise_edge_factor", "1.2", "multiplier on the noise-bulk edge floor"},
                               {"max_outer_iters", "10", "maximum rank/threshold alternations"}}})},
      {"check-gradients", concat({{{"dims", "4,5,6", "tensor dimensions"},
                                   {"ranks", "2,2,2", "Tucker ranks"},
                                   {"n", "30", "samples per instance"},
                                   {"instances", "20", "random instances"},
                                   {"regime", "clipped", "quadratic or clipped"},
                                   {"h", "1e-6", "central-difference step"},
                                   {"directions_per_block", "3", "directions per block and instance"},
                                   {"tolerance", "1e-5", "pass threshold on the worst relative error"}}})},
      {"check-rsc", concat({synthetic_keys("8,8,8", "student_t", "3", "30"),
                            {{"radius", "1", "radius R of the perturbation set"},
                             {"trials", "200", "random perturbations"},
                             {"delta", "1", "moment exponent in the varpi rule"},
                             {"varpi", "rule", "Huber threshold: rule, inf or a number"},
                             {"c1_directions", "50", "random directions for the fourth-moment constant"}}})},
      {"check-lemma2", concat({{{"n", "200", "samples"},
                                {"d1", "100", "rows"},
                                {"d2", "5", "columns"},
                                {"noise", "gaussian", "noise family"},
                                {"noise_param", "0", "noise family parameter"},
                                {"noise_scale", "1", "noise scale"},
                                {"tau", "scale_rule", "truncation level: scale_rule, inf or a number"},
                                {"rank", "1", "rank used for the matrix df in the scale rule"},
                                {"t", "3", "tail parameter"},
                                {"t_grid", "1,3,5", "tail parameters for the coverage table"},
                                {"constant", "calibrated", "constant C: calibrated or a number"},
                                {"calibrate", "false", "recalibrate C on these draws"},
                                {"reps", "200", "replicates"}}})},
      {"check-lemma3", concat({{{"d1", "10", "rows"},
                                {"d2", "10", "columns"},
                                {"signal_rank", "2", "rank of the target matrix"},
                                {"signal_scale", "1", "nonzero singular values of the target matrix"},
                                {"noise", "student_t", "noise family"},
                                {"noise_param", "3", "noise family parameter"},
                                {"noise_scale", "1", "noise scale"},
                                {"n_grid", "250,500,1000,2000", "ascending sample sizes"},
                                {"tau_rule", "scale_rule", "scale_rule, infinite or fixed"},
                                {"fixed_tau", "1", "tau for the fixed rule"},
                                {"reps", "50", "replicates"}}})},
  };
  return s;
}

// ---------------------------------------------------------------------------
// Reports

struct Table
{
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;
};

struct Report
{
  Json result = Json::object();
  std::vector<Table> tables;
};

Json num(double v)
{
  if (std::isfinite(v))
    return v;
  if (std::isnan(v))
    return "nan";
  return v > 0 ? "inf" : "-inf";
}

std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_cell(const Json& j)
{
  if (j.is_number_float())
    return format_double(j.get<double>());
  if (j.is_boolean())
    return j.get<bool>() ? "1" : "0";
  if (j.is_string())
    return j.get<std::string>();
  if (j.is_null())
    return "";
  return j.dump();
}

std::string triple_string(const std::array<Index, 3>& t)
{
  return std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]);
}

void write_report(std::ostream& os, const std::string& command, const ResolvedConfig& cfg, const Report& report,
                  const std::string& format)
{
  if (format == "json") {
    Json doc;
    doc["command"] = command;
    Json c = Json::object();
    for (const auto& [k, v] : cfg.entries())
      c[k] = v;
    doc["config"] = c;
    doc["result"] = report.result;
    Json tables = Json::object();
    for (const auto& t : report.tables) {
      Json rows = Json::array();
      for (const auto& row : t.rows) {
        Json obj = Json::object();
        for (std::size_t i = 0; i < t.columns.size(); ++i)
          obj[t.columns[i]] = row[i];
        rows.push_back(obj);
      }
      tables[t.name] = rows;
    }
    doc["tables"] = tables;
    os << doc.dump(2) << '\n';
    return;
  }
  os << "# command=" << command << '\n';
  for (const auto& [k, v] : cfg.entries())
    os << "# " << k << '=' << v << '\n';
  for (const auto& [k, v] : report.result.items())
    os << "# result." << k << '=' << csv_cell(v) << '\n';
  if (report.tables.empty())
    return;
  const Table& t = report.tables.front();
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      os << (i ? "," : "") << csv_cell(row[i]);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Config interpretation; anything thrown here is a configuration error.

template <typename F>
auto config_step(F&& f) -> decltype(f())
{
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

NoiseModel noise_from(const ResolvedConfig& c)
{
  NoiseModel m{parse_noise_family(c.get("noise")), c.get_double("noise_param"), c.get_double("noise_scale")};
  m.validate();
  return m;
}

Index resolve_n(const ResolvedConfig& c, const Dims& dims, const Ranks& ranks)
{
  const std::string& text = c.get("n");
  if (text == "auto") {
    const double n_per_df = c.get_double("n_per_df");
    if (!(n_per_df > 0))
      throw ConfigError("config key 'n_per_df' must be positive");
    return static_cast<Index>(std::llround(n_per_df * degrees_of_freedom(dims, ranks)));
  }
  const auto n = parse_int(text, "config key 'n'");
  if (n < 1)
    throw ConfigError("config key 'n' must be positive");
  return static_cast<Index>(n);
}

SyntheticSpec synthetic_from(const ResolvedConfig& c, std::uint64_t seed)
{
  SyntheticSpec s;
  s.dims = c.get_triple("dims");
  s.ranks = c.get_triple("ranks");
  s.n = resolve_n(c, s.dims, s.ranks);
  s.noise = noise_from(c);
  s.lambda_min = c.get_double("lambda_min");
  s.lambda_max = c.get_double("lambda_max");
  s.contamination = {c.get_double("contamination_fraction"), c.get_double("contamination_factor")};
  s.seed = seed;
  s.validate();
  return s;
}

EstimatorConfig estimator_from(const ResolvedConfig& c, const NoiseModel& noise)
{
  EstimatorConfig est;
  est.kind = parse_estimator(c.get("estimator"));
  est.delta = c.get_double("delta");
  if (!(est.delta > 0) || est.delta > 1)
    throw ConfigError("config key 'delta' must lie in (0, 1]");
  const std::string& m = c.get("moment");
  if (m == "oracle") {
    const double v = absolute_moment(noise, 1.0 + est.delta);
    if (!std::isfinite(v))
      throw ConfigError("config key 'moment': the noise has no finite moment of order 1 + delta");
    est.moment = v;
  } else if (m != "plugin") {
    est.moment = parse_double(m, "config key 'moment'");
    if (!(*est.moment > 0))
      throw ConfigError("config key 'moment' must be positive");
  }
  est.t_max = static_cast<int>(c.get_int("t_max"));
  est.rel_tol = c.get_double("rel_tol");
  if (*est.t_max < 1)
    throw ConfigError("config key 't_max' must be at least 1");
  if (!(*est.rel_tol >= 0))
    throw ConfigError("config key 'rel_tol' must be non-negative");
  return est;
}

std::optional<double> auto_or_number(const ResolvedConfig& c, const std::string& key)
{
  const std::string& v = c.get(key);
  if (v == "auto")
    return std::nullopt;
  const double x = parse_double(v, "config key '" + key + "'");
  if (!(x > 0))
    throw ConfigError("config key '" + key + "' must be positive");
  return x;
}

int positive_int(const ResolvedConfig& c, const std::string& key)
{
  const auto v = c.get_int(key);
  if (v < 1)
    throw ConfigError("config key '" + key + "' must be at least 1");
  return static_cast<int>(v);
}

Json triple_json(const std::array<Index, 3>& t) { return Json::array({t[0], t[1], t[2]}); }

// Loads the dataset named by `data` or generates it from the synthetic keys.
DatasetFile load_or_generate(const ResolvedConfig& c, std::uint64_t seed)
{
  const std::string& path = c.get("data");
  if (!path.empty()) {
    try {
      return read_dataset_file(path);
    } catch (const std::runtime_error& e) {
      throw ConfigError(std::string("config key 'data': ") + e.what());
    }
  }
  const SyntheticSpec spec = config_step([&] { return synthetic_from(c, seed); });
  Dataset d = gen_dataset(spec);
  return {spec, std::move(d.samples)};
}

// ---------------------------------------------------------------------------
// Commands

struct Context
{
  std::string command;
  ResolvedConfig cfg;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out_path;
  std::string format;
  std::ostream* console = nullptr;
};

Report cmd_simulate(const Context& ctx)
{
  if (ctx.out_path.empty())
    throw ConfigError("simulate needs --out <path> for the dataset file");
  const SyntheticSpec spec = config_step([&] { return synthetic_from(ctx.cfg, ctx.seed); });
  Dataset d = gen_dataset(spec);
  write_dataset_file(ctx.out_path, {spec, d.samples});
  Report r;
  r.result["path"] = ctx.out_path;
  r.result["n"] = spec.n;
  r.result["df"] = num(degrees_of_freedom(spec.dims, spec.ranks));
  r.result["target_norm"] = num(d.truth.norm());
  r.result["response_norm"] = num(d.samples.response.norm());
  return r;
}

Report cmd_fit(const Context& ctx)
{
  const ResolvedConfig& c = ctx.cfg;
  const DatasetFile data = load_or_generate(c, ctx.seed);
  const SampleSet& samples = data.samples;

  std::optional<RankSelectResult> selection;
  Ranks ranks = data.spec.ranks;
  const std::string& fr = c.get("fit_ranks");
  if (fr == "select") {
    selection = select_rank(samples);
    ranks = selection->ranks;
  } else if (fr != "spec") {
    ranks = c.get_triple("fit_ranks");
  }
  for (int k = 0; k < 3; ++k)
    if (ranks[k] > samples.dims[k])
      throw ConfigError("fit ranks " + triple_string(ranks) + " exceed dims " + dims_string(samples.dims));

  const EstimatorConfig est = config_step([&] { return estimator_from(c, data.spec.noise); });
  GDConfig gd = resolve_tuning(samples, ranks, est);
  if (auto v = auto_or_number(c, "tau"))
    gd.tau = *v;
  if (auto v = auto_or_number(c, "varpi"))
    gd.varpi = *v;
  if (auto v = auto_or_number(c, "eta"))
    gd.eta = *v;
  const auto halvings = c.get_int("max_step_halvings");
  if (halvings < 0)
    throw ConfigError("config key 'max_step_halvings' must be non-negative");
  gd.max_step_halvings = static_cast<int>(halvings);
  config_step([&] { gd.validate(); });

  const FitResult fr_result = fit(samples, gd, samples.ground_truth);

  Report r;
  r.result["n"] = samples.size();
  r.result["fit_ranks"] = triple_json(ranks);
  if (selection)
    r.result["rank_select_converged"] = selection->converged;
  r.result["tau"] = num(gd.tau);
  r.result["varpi"] = num(gd.varpi);
  r.result["a"] = num(gd.a);
  r.result["b"] = num(gd.b);
  r.result["eta"] = num(gd.eta);
  r.result["eta_used"] = num(fr_result.eta_used);
  r.result["step_halvings"] = fr_result.step_halvings;
  r.result["iterations"] = fr_result.iterations_run;
  r.result["converged"] = fr_result.converged;
  r.result["diverged"] = fr_result.diverged;
  r.result["final_objective"] = num(fr_result.objective_trace.back());
  double truth_norm = 0;
  if (samples.ground_truth) {
    truth_norm = samples.ground_truth->norm();
    const double err = estimation_error(fr_result.estimate, *samples.ground_truth);
    r.result["error_frobenius"] = num(err);
    r.result["relative_error"] = num(truth_norm > 0 ? err / truth_norm : err);
  }

  Table trace{"trace", {"iteration", "objective"}, {}};
  if (samples.ground_truth) {
    trace.columns.push_back("error_frobenius");
    trace.columns.push_back("relative_error");
  }
  for (std::size_t t = 0; t < fr_result.objective_trace.size(); ++t) {
    std::vector<Json> row{static_cast<std::int64_t>(t), num(fr_result.objective_trace[t])};
    if (samples.ground_truth) {
      const double e = fr_result.error_trace[t];
      row.push_back(num(e));
      row.push_back(num(truth_norm > 0 ? e / truth_norm : e));
    }
    trace.rows.push_back(std::move(row));
  }
  r.tables.push_back(std::move(trace));
  return r;
}

Report cmd_benchmark(const Context& ctx)
{
  const ResolvedConfig& c = ctx.cfg;
  std::vector<SyntheticSpec> cells;
  config_step([&] {
    ResolvedConfig one = c;
    if (c.get("n") == "auto") {
      for (double m : c.get_doubles("n_per_df")) {
        one.set("n_per_df", format_double(m));
        cells.push_back(synthetic_from(one, 0));
      }
    } else {
      for (auto n : c.get_ints("n")) {
        one.set("n", std::to_string(n));
        cells.push_back(synthetic_from(one, 0));
      }
    }
    return 0;
  });
  const EstimatorConfig est = config_step([&] { return estimator_from(c, cells.front().noise); });
  const int reps = positive_int(c, "reps");
  MonteCarloOptions mc{ctx.seed, ctx.threads, c.get_bool("record_runtime")};
  const ErrorTable table = monte_carlo(cells, static_cast<std::size_t>(reps), est, mc);

  const std::string& tidy = c.get("tidy_out");
  if (!tidy.empty()) {
    std::ofstream os(tidy);
    if (!os)
      throw std::runtime_error("cannot open " + tidy + " for writing");
    table.write_tidy_csv(os);
  }

  Report r;
  Table rows{"rows", ErrorTable::columns(), {}};
  for (const auto& e : table.rows) {
    const auto& s = e.spec;
    rows.rows.push_back({e.cell, e.rep, s.seed, s.dims[0], s.dims[1], s.dims[2], s.ranks[0], s.ranks[1], s.ranks[2],
                         s.n, std::string(to_string(s.noise.family)), num(s.noise.param), num(s.noise.scale),
                         num(s.lambda_min), num(s.lambda_max), num(s.contamination.fraction),
                         num(s.contamination.factor), e.estimator, num(e.error_frobenius), num(e.relative_error),
                         e.iterations, num(e.runtime_ms), e.converged});
  }
  r.tables.push_back(std::move(rows));

  Table summary{"cells", {"cell", "n", "median_error", "median_relative_error", "diverged"}, {}};
  std::vector<double> ns, meds;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    std::vector<double> errs, rels;
    int diverged = 0;
    for (const auto& e : table.rows)
      if (e.cell == k) {
        errs.push_back(e.error_frobenius);
        rels.push_back(e.relative_error);
        diverged += e.diverged ? 1 : 0;
      }
    const double med = median(errs);
    summary.rows.push_back({k, cells[k].n, num(med), num(median(rels)), diverged});
    ns.push_back(static_cast<double>(cells[k].n));
    meds.push_back(med);
  }
  r.tables.push_back(std::move(summary));
  r.result["cells"] = cells.size();
  r.result["reps"] = reps;
  if (cells.size() >= 2)
    r.result["loglog_slope"] = num(loglog_slope(ns, meds));
  return r;
}

Report cmd_rank_select(const Context& ctx)
{
  const ResolvedConfig& c = ctx.cfg;
  RankSelectConfig rs;
  rs.singular_value_ratio_threshold = c.get_double("ratio");
  rs.noise_edge_factor = c.get_double("noise_edge_factor");
  rs.max_outer_iters = positive_int(c, "max_outer_iters");
  config_step([&] { rs.validate(); });
  const DatasetFile data = load_or_generate(c, ctx.seed);
  const RankSelectResult res = select_rank(data.samples, rs);

  Report r;
  r.result["ranks"] = triple_json(res.ranks);
  r.result["converged"] = res.converged;
  r.result["degenerate"] = res.degenerate;
  r.result["outer_iterations"] = res.trace.empty() ? 0 : static_cast<int>(res.trace.size()) - 1;
  r.result["true_ranks"] = triple_json(data.spec.ranks);
  if (!res.warning.empty())
    r.result["warning"] = res.warning;
  Table trace{"trace", {"step", "tau", "r1", "r2", "r3"}, {}};
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    const auto& s = res.trace[i];
    trace.rows.push_back({i, num(s.tau), s.ranks[0], s.ranks[1], s.ranks[2]});
  }
  r.tables.push_back(std::move(trace));
  return r;
}

Report cmd_check_gradients(const Context& ctx)
{
  const ResolvedConfig& c = ctx.cfg;
  const Dims dims = c.get_triple("dims");
  const Ranks ranks = c.get_triple("ranks");
  const Index n = positive_int(c, "n");
  const int instances = positive_int(c, "instances");
  const FDRegime regime = config_step([&] { return parse_fd_regime(c.get("regime")); });
  FDCheckOptions opts;
  opts.h = c.get_double("h");
  opts.directions_per_block = positive_int(c, "directions_per_block");
  const double tol = c.get_double("tolerance");
  if (!(opts.h > 0))
    throw ConfigError("config key 'h' must be positive");
  for (int k = 0; k < 3; ++k)
    if (ranks[k] > dims[k])
      throw ConfigError("ranks exceed dims");

  std::vector<FDCheckReport> reports(instances);
  std::vector<double> varpis(instances);
  parallel_for(static_cast<std::size_t>(instances), ctx.threads, [&](std::size_t i) {
    const std::uint64_t s = derive_seed(ctx.seed, {i});
    const FDInstance inst = make_fd_instance(dims, ranks, n, regime, s);
    FDCheckOptions o = opts;
    o.seed = s;
    reports[i] = gradient_fd_check(inst.samples, inst.factors, HuberParams(inst.varpi), inst.a, inst.b, o);
    varpis[i] = inst.varpi;
  });

  Report r;
  Table t{"instances", {"instance", "varpi", "max_rel_error", "core", "u1", "u2", "u3", "kink_hits"}, {}};
  double worst = 0;
  int kinks = 0;
  for (int i = 0; i < instances; ++i) {
    const auto& rep = reports[i];
    worst = std::max(worst, rep.max_rel_error);
    kinks += rep.kink_hits;
    t.rows.push_back({i, num(varpis[i]), num(rep.max_rel_error), num(rep.block_rel_error[0]),
                      num(rep.block_rel_error[1]), num(rep.block_rel_error[2]), num(rep.block_rel_error[3]),
                      rep.kink_hits});
  }
  r.result["max_rel_error"] = num(worst);
  r.result["kink_hits"] = kinks;
  r.result["passed"] = worst <= tol;
  r.tables.push_back(std::move(t));
  return r;
}

Report cmd_check_rsc(const Context& ctx)
{
  const ResolvedConfig& c = ctx.cfg;
  const SyntheticSpec spec = config_step([&] { return synthetic_from(c, ctx.seed); });
  const double radius = c.get_double("radius");
  const int trials = positive_int(c, "trials");
  const double delta = c.get_double("delta");
  const int dirs = positive_int(c, "c1_directions");
  if (!(radius > 0) || std::isinf(radius))
    throw ConfigError("config key 'radius' must be positive and finite");
  if (!(delta > 0) || delta > 1)
    throw ConfigError("config key 'delta' must lie in (0, 1]");

  const Dataset d = gen_dataset(spec);
  const double c1 = estimate_c1(d.samples, dirs, derive_seed(ctx.seed, {static_cast<std::uint64_t>(StreamTag::direction)}));
  const double moment = absolute_moment(spec.noise, 1.0 + delta);
  double varpi = 0;
  const std::string& v = c.get("varpi");
  if (v == "rule") {
    if (!std::isfinite(moment))
      throw ConfigError("config key 'varpi': the noise has no finite moment of order 1 + delta; set varpi explicitly");
    varpi = rsc_varpi(moment, delta, c1, radius);
  } else {
    varpi = parse_double(v, "config key 'varpi'");
    if (!(varpi > 0))
      throw ConfigError("config key 'varpi' must be positive");
  }
  const RSCReport rep = rsc_check(d.samples, d.truth, radius, spec.ranks, HuberParams(varpi), trials,
                                  derive_seed(ctx.seed, {static_cast<std::uint64_t>(StreamTag::perturbation)}));
  Report r;
  r.result["n"] = spec.n;
  r.result["trials"] = rep.trials;
  r.result["satisfied_count"] = rep.satisfied_count;
  r.result["satisfied_fraction"] = num(rep.satisfied_fraction());
  r.result["min_ratio"] = num(rep.min_ratio);
  r.result["mean_ratio"] = num(rep.mean_ratio);
  r.result["threshold"] = num(rep.threshold);
  r.result["radius"] = num(rep.radius);
  r.result["varpi"] = num(rep.varpi);
  r.result["c1"] = num(c1);
  r.result["noise_moment"] = num(moment);
  r.result["perturbation_ranks"] = triple_json(rep.perturbation_ranks);
  r.result["max_perturbation_norm"] = num(rep.max_perturbation_norm);
  return r;
}

Report cmd_check_singular_bounds(const Context& ctx)
{
  const ResolvedConfig& c = ctx.cfg;
  SingularBoundsConfig l;
  l.n = positive_int(c, "n");
  l.d1 = positive_int(c, "d1");
  l.d2 = positive_int(c, "d2");
  l.noise = config_step([&] { return noise_from(c); });
  l.t = c.get_double("t");
  l.reps = positive_int(c, "reps");
  l.seed = ctx.seed;
  l.threads = ctx.threads;
  const std::string& tau = c.get("tau");
  if (tau == "scale_rule") {
    const double var = l.noise.variance();
    if (!std::isfinite(var))
      throw ConfigError("config key 'tau': the scale rule needs finite noise variance");
    l.tau = scale_threshold(var, static_cast<double>(l.n), matrix_degrees_of_freedom(l.d1, l.d2, positive_int(c, "rank")),
                              1.0);
  } else {
    l.tau = parse_double(tau, "config key 'tau'");
  }
  const std::string& cc = c.get("constant");
  l.constant_c = cc == "calibrated" ? kSingularBoundsCalibratedC : parse_double(cc, "config key 'constant'");
  const auto t_grid = c.get_doubles("t_grid");
  config_step([&] { l.validate(); });

  const SingularBoundsReport rep = truncated_singular_bounds(l);
  double constant = l.constant_c;
  Report r;
  if (c.get_bool("calibrate")) {
    constant = 0;
    for (int i = 1; i <= 1000; ++i) {
      const SingularBoundsCoverage cov = singular_bounds_coverage(rep, l, 0.01 * i, l.t);
      if (cov.upper >= 0.95 && cov.lower >= 0.95) {
        constant = 0.01 * i;
        break;
      }
    }
    r.result["calibrated_constant"] = num(constant);
  }
  const SingularBoundsCoverage main = singular_bounds_coverage(rep, l, constant, l.t);
  r.result["tau"] = num(l.tau);
  r.result["constant"] = num(constant);
  r.result["psi_second_moment"] = num(rep.psi_second_moment);
  r.result["upper_coverage"] = num(main.upper);
  r.result["lower_coverage"] = num(main.lower);
  r.result["upper_bound_sq"] = num(rep.upper_bound);
  r.result["lower_bound_sq"] = num(rep.lower_bound);

  Table cov{"coverage", {"t", "constant", "upper_coverage", "lower_coverage"}, {}};
  for (double t : t_grid) {
    if (!(t > 0))
      throw ConfigError("config key 't_grid': entries must be positive");
    const SingularBoundsCoverage cv = singular_bounds_coverage(rep, l, constant, t);
    cov.rows.push_back({num(t), num(constant), num(cv.upper), num(cv.lower)});
  }
  Table draws{"draws", {"rep", "sigma_max", "sigma_min"}, {}};
  for (std::size_t i = 0; i < rep.sigma_max.size(); ++i)
    draws.rows.push_back({i, num(rep.sigma_max[i]), num(rep.sigma_min[i])});
  r.tables.push_back(std::move(cov));
  r.tables.push_back(std::move(draws));
  return r;
}

Report cmd_check_concentration(const Context& ctx)
{
  const ResolvedConfig& c = ctx.cfg;
  ConcentrationConfig l;
  l.d1 = positive_int(c, "d1");
  l.d2 = positive_int(c, "d2");
  l.signal_rank = positive_int(c, "signal_rank");
  l.signal_scale = c.get_double("signal_scale");
  l.noise = config_step([&] { return noise_from(c); });
  l.n_grid.clear();
  for (auto n : c.get_ints("n_grid"))
    l.n_grid.push_back(static_cast<Index>(n));
  const std::string& rule = c.get("tau_rule");
  if (rule == "scale_rule")
    l.tau_rule = TauRule::scale_rule;
  else if (rule == "infinite")
    l.tau_rule = TauRule::infinite;
  else if (rule == "fixed")
    l.tau_rule = TauRule::fixed;
  else
    throw ConfigError("config key 'tau_rule': expected scale_rule, infinite or fixed, got '" + rule + "'");
  l.fixed_tau = c.get_double("fixed_tau");
  l.reps = positive_int(c, "reps");
  l.seed = ctx.seed;
  l.threads = ctx.threads;
  config_step([&] { l.validate(); });

  const ConcentrationReport rep = opnorm_concentration(l);
  Report r;
  r.result["slope"] = num(rep.slope);
  r.result["paired_decrease_fraction"] = num(rep.paired_decrease_fraction);
  Table rows{"rows", {"n", "tau", "median_deviation"}, {}};
  Table devs{"deviations", {"rep", "n", "deviation"}, {}};
  for (const auto& row : rep.rows) {
    rows.rows.push_back({row.n, num(row.median_tau), num(row.median_deviation)});
    for (std::size_t i = 0; i < row.deviations.size(); ++i)
      devs.rows.push_back({i, row.n, num(row.deviations[i])});
  }
  r.tables.push_back(std::move(rows));
  r.tables.push_back(std::move(devs));
  return r;
}

Report dispatch(const Context& ctx)
{
  const std::string& c = ctx.command;
  if (c == "simulate")
    return cmd_simulate(ctx);
  if (c == "fit")
    return cmd_fit(ctx);
  if (c == "benchmark")
    return cmd_benchmark(ctx);
  if (c == "rank-select")
    return cmd_rank_select(ctx);
  if (c == "check-gradients")
    return cmd_check_gradients(ctx);
  if (c == "check-rsc")
    return cmd_check_rsc(ctx);
  if (c == "check-lemma2")
    return cmd_check_singular_bounds(ctx);
  return cmd_check_concentration(ctx);
}

void error_line(std::ostream& err, int code, const std::string& kind, const std::string& message)
{
  Json j;
  j["status"] = "error";
  j["kind"] = kind;
  j["exit_code"] = code;
  j["message"] = message;
  err << j.dump() << '\n';
}

} // namespace

const std::vector<std::string>& commands()
{
  static const std::vector<std::string> c{"simulate",  "fit",       "benchmark",    "rank-select",
                                          "check-gradients", "check-rsc", "check-lemma2", "check-lemma3"};
  return c;
}

const std::vector<ConfigKey>& schema(std::string_view command)
{
  const auto& s = schemas();
  const auto it = s.find(command);
  if (it == s.end())
    throw ConfigError("unknown command '" + std::string(command) + "'");
  return it->second;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Robust low-rank tensor regression with heavy-tailed noise"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_path, format = "csv";
  std::optional<std::uint64_t> seed;
  unsigned threads = default_thread_count();
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--seed", seed, "master seed (overrides the config key)");
  app.add_option("--out", out_path, "output path (stdout when omitted)");
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  const std::map<std::string, std::string> about{
      {"simulate", "generate a synthetic dataset file"},
      {"fit", "fit the robust estimator to a dataset file or an inline synthetic dataset"},
      {"benchmark", "Monte Carlo error table over a grid of sample sizes"},
      {"rank-select", "estimate the multilinear ranks by the iterative truncation rule"},
      {"check-gradients", "compare analytic gradients with central finite differences"},
      {"check-rsc", "empirical restricted strong convexity frequency"},
      {"check-lemma2", "coverage of the truncated singular value bounds"},
      {"check-lemma3", "operator-norm concentration of the truncated moment matrix"},
  };
  for (const auto& name : commands())
    app.add_subcommand(name, about.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    error_line(err, kExitBadConfig, "usage", e.what());
    return kExitBadConfig;
  }

  Context ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  ctx.out_path = out_path;
  ctx.format = format;
  ctx.threads = threads;
  ctx.console = &out;

  try {
    const auto entries = config_path.empty() ? std::vector<ConfigEntry>{} : parse_config_file(config_path);
    ctx.cfg = ResolvedConfig(schema(ctx.command), entries);
    if (seed)
      ctx.cfg.set("seed", std::to_string(*seed));
    ctx.seed = ctx.cfg.get_u64("seed");

    Report report = dispatch(ctx);
    const bool diverged = report.result.contains("diverged") && report.result["diverged"].get<bool>();

    if (ctx.command == "simulate") {
      write_report(out, ctx.command, ctx.cfg, report, format);
    } else if (out_path.empty()) {
      write_report(out, ctx.command, ctx.cfg, report, format);
    } else {
      std::ofstream os(out_path);
      if (!os)
        throw std::runtime_error("cannot open " + out_path + " for writing");
      write_report(os, ctx.command, ctx.cfg, report, format);
      for (const auto& [k, v] : report.result.items())
        if (v.is_primitive())
          out << k << '=' << csv_cell(v) << '\n';
    }
    if (diverged) {
      error_line(err, kExitDiverged, "diverged", "gradient descent diverged; partial trace written");
      return kExitDiverged;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    error_line(err, kExitBadConfig, "bad_config", e.what());
    return kExitBadConfig;
  } catch (const std::exception& e) {
    error_line(err, kExitFailure, "failure", e.what());
    return kExitFailure;
  }
}

} // namespace rtr::cli
