#include <map>
#include <CLI11.hpp>

#include "nlrepr/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stochastic representation under non-linear expectations on event trees"};
  app.require_subcommand(1);

  nlrepr::cli::RunConfig run;

  auto add_common = [&](CLI::App* cmd, bool sweep) {
    cmd->add_option("--config", run.config_path, "problem document (JSON)")->required();
    cmd->add_option("--out", run.out_dir, "output directory (default .)");
    cmd->add_option("--seed", run.seed, "seed for randomized checks");
    cmd->add_option("--tol-root", run.tol.root, "root-finding tolerance on |Phi|");
    cmd->add_option("--tol-residual", run.tol.residual, "residual acceptance tolerance");
    cmd->add_option("--max-depth", run.max_depth, "depth guard for unfolded binary trees");
    cmd->add_option("--threads", run.threads, "worker threads (results are thread-count invariant)");
    if (sweep) cmd->add_option("--strikes", run.strikes, "strike grid a:b:n (overrides the config)");
  };

  struct Entry {
    const char* group;
    const char* action;
    const char* blurb;
  };
  const Entry entries[] = {
      {"tree", "gen", "generate a tree and emit it as CSV"},
      {"axioms", "check", "randomized operator axiom suite"},
      {"repr", "solve", "solve the representation problem"},
      {"repr", "verify", "solve plus residual, uniqueness and monotonicity probes"},
      {"repr", "characterize", "essinf characterization and tau* optimality"},
      {"stop", "solve", "optimal stopping via level crossing"},
      {"stop", "verify", "stopping with all oracles enforced"},
      {"skorokhod", "solve", "obstacle problem solution"},
      {"skorokhod", "verify", "obstacle checks plus random falsification probes"},
      {"skorokhod", "falsify", "test a candidate increasing process zeta"},
      {"amput", "boundary", "universal exercise signal K"},
      {"amput", "sweep", "per-strike exercise table against the Snell oracle"},
  };

  std::map<std::string, CLI::App*> groups;
  for (const auto& e : entries) {
    auto it = groups.find(e.group);
    CLI::App* group = it != groups.end() ? it->second : app.add_subcommand(e.group, "");
    if (it == groups.end()) {
      group->require_subcommand(1);
      groups.emplace(e.group, group);
    }
    CLI::App* action = group->add_subcommand(e.action, e.blurb);
    add_common(action, std::string(e.group) == "amput" && std::string(e.action) == "sweep");
    action->callback([&run, &e] {
      run.group = e.group;
      run.action = e.action;
    });
  }

  CLI11_PARSE(app, argc, argv);
  return nlrepr::cli::run(run);
}
