// aacli: run Anderson acceleration experiments, check runs against the
// residual bounds, and compare run summaries.

#include "anderson/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

using namespace anderson;
using nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::map<std::string, std::string> values;

  void add(CLI::App* app) {
    app->add_option("--config", config, "flat JSON config file; flags override its keys");
    for (const char* name :
         {"problem", "m", "depth-policy", "switch-tol", "beta", "tol", "max-iters", "epsilon",
          "k0", "grid-h", "kappa-g", "kappa-hat-g", "sigma", "cs-mode", "bound-mode", "out",
          "seed", "dimension", "label", "rank-policy"}) {
      app->add_option_function<std::string>(
          std::string("--") + name, [this, name](const std::string& v) { values[name] = v; },
          help(name));
    }
  }

  static std::string help(const std::string& name) {
    static const std::map<std::string, std::string> h = {
        {"problem", "polynomial | nlh | linear | external-trace"},
        {"m", "depth for fixed policies"},
        {"depth-policy", "fixed | fixed:<m> | unbounded | switch:<low>,<high>"},
        {"switch-tol", "residual below which a switch policy moves to the high depth"},
        {"beta", "damping in (0, 1]"},
        {"tol", "residual tolerance"},
        {"max-iters", "maximum residual evaluations"},
        {"epsilon", "nlh nonlinearity"},
        {"k0", "nlh wave number"},
        {"grid-h", "nlh grid spacing"},
        {"kappa-g", "bound of |g'|"},
        {"kappa-hat-g", "Lipschitz constant of g'"},
        {"sigma", "lower bound sigma in |w_{j+1}-w_j| >= sigma |e_j|"},
        {"cs-mode", "measured | fixed:<v>"},
        {"bound-mode", "m1 | general"},
        {"out", "history CSV path; the summary goes to <out>.summary.json"},
        {"seed", "seed for the linear problem"},
        {"dimension", "linear problem dimension"},
        {"label", "run label used by compare"},
        {"rank-policy", "drop-oldest | fail"}};
    const auto it = h.find(name);
    return it == h.end() ? "" : it->second;
  }

  json document() const {
    json doc = config.empty() ? json::object() : read_config_file(config);
    if (!doc.is_object()) throw ConfigError(config + ": config must be a JSON object");
    for (const auto& [k, v] : values) {
      // drop any spelling of the key from the file so the flag wins
      std::string u = k;
      std::replace(u.begin(), u.end(), '-', '_');
      doc.erase(u);
      doc[k] = v;
    }
    return doc;
  }
};

void print_summary(const RunSummary& s) {
  std::printf("label: %s\nproblem: %s\npolicy: %s  beta: %g\n", s.label.c_str(), s.problem.c_str(),
              s.depth_policy.c_str(), s.beta);
  std::printf("termination: %s after %d iterations, final residual %.6e\n",
              to_string(s.termination), s.iterations, s.final_residual);
  std::printf("mean theta: %.6f  wall time: %.3f s\n", s.mean_theta, s.wall_time_s);
  if (s.bound_checked)
    std::printf("bound check: %d rows, %d violations\n", s.bound_checked, s.bound_violations);
  if (s.switch_row) std::printf("depth switch at k = %d\n", s.switch_row);
}

void write_outputs(const ExperimentReport& rep, const std::string& out) {
  if (out.empty()) return;
  emit_history_csv(rep.rows, out);
  write_summary(rep.summary, out + ".summary.json");
}

int cmd_run(const Flags& flags) {
  const ExperimentConfig cfg = config_from_json(flags.document());
  const ExperimentReport rep = run_experiment(cfg);
  write_outputs(rep, cfg.out);
  if (cfg.out.empty()) std::fputs(history_csv(rep.rows).c_str(), stdout);
  else print_summary(rep.summary);
  return exit_code(rep.summary.termination);
}

int cmd_bounds_check(const Flags& flags, const std::string& trace) {
  json doc = flags.document();
  if (!trace.empty()) {
    doc["problem"] = "external-trace";
    doc["trace"] = trace;
  }
  const ExperimentConfig cfg = config_from_json(doc);
  if (!cfg.constants())
    throw ConfigError("bounds-check needs --kappa-g, --kappa-hat-g and --sigma for this problem");
  const ExperimentReport rep = run_experiment(cfg);
  write_outputs(rep, cfg.out);
  std::printf("%6s %14s %14s %14s %14s %s\n", "k", "ratio", "lower", "higher", "total", "ok");
  for (const auto& r : rep.rows) {
    if (std::isnan(r.bound_total)) continue;
    std::printf("%6d %14.6e %14.6e %14.6e %14.6e %s\n", r.k, r.ratio, r.bound_lower,
                r.bound_higher, r.bound_total,
                r.ratio <= r.bound_total * (1 + 1e-9) ? "yes" : "NO");
  }
  std::printf("checked %d rows, %d violations\n", rep.summary.bound_checked,
              rep.summary.bound_violations);
  return rep.summary.bound_violations == 0 ? 0 : 4;
}

int cmd_compare(const Flags& flags, const std::vector<std::string>& summaries,
                const std::vector<std::string>& variants) {
  std::vector<RunSummary> runs;
  for (const auto& path : summaries) runs.push_back(read_summary(path));
  for (const auto& v : variants) {
    json doc = flags.document();
    // a variant is "<policy>" or "<label>=<policy>"
    const auto eq = v.find('=');
    doc["depth-policy"] = eq == std::string::npos ? v : v.substr(eq + 1);
    doc["label"] = eq == std::string::npos ? v : v.substr(0, eq);
    doc.erase("out");
    runs.push_back(run_experiment(config_from_json(doc)).summary);
  }
  std::fputs(compare_runs(runs).format().c_str(), stdout);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anderson acceleration experiments"};
  app.require_subcommand(1);

  Flags run_flags, check_flags, compare_flags;
  auto* run = app.add_subcommand("run", "run one experiment, write CSV history and summary");
  run_flags.add(run);

  auto* check = app.add_subcommand("bounds-check", "compare residual ratios with the bounds");
  check_flags.add(check);
  std::string trace;
  check->add_option("--trace", trace, "history CSV to check instead of running");

  auto* compare = app.add_subcommand("compare", "tabulate iterations, residuals and mean gain");
  compare_flags.add(compare);
  std::vector<std::string> summaries, variants;
  compare->add_option("summaries", summaries, "summary JSON files written by run");
  compare->add_option("--variant", variants, "depth policy to run with the shared flags");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*check) return cmd_bounds_check(check_flags, trace);
    return cmd_compare(compare_flags, summaries, variants);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ComparisonError& e) {
    std::cerr << "compare: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
