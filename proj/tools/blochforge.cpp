#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "blochforge/runner.hpp"

namespace fs = std::filesystem;
using namespace blochforge;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

fs::path output_dir(const Common& o, const RunConfig& c) {
  if (!o.out.empty()) return o.out;
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("BLOCHFORGE_OUT"); env && *env) return env;
  return "out";
}

int execute(const std::string& kind, const Common& o) {
  RunConfig c;
  try {
    c = load_config(o.config);
    if (c.kind != kind) throw ConfigError("config: kind '" + c.kind + "' does not match subcommand '" + kind + "'");
    if (o.threads) c.threads = *o.threads;
    if (o.seed) c.seed = *o.seed;
    const fs::path base = fs::path(o.config).parent_path();
    if (!c.reference.empty() && fs::path(c.reference).is_relative()) c.reference = (base / c.reference).string();
    if (kind == "verify" && c.run_dir.empty() && o.out.empty()) throw ConfigError("config: verify needs 'run_dir' or --out");
    if (kind == "verify" && !o.out.empty()) c.run_dir = o.out;
    validate(c);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  }
  const fs::path out = kind == "verify" ? fs::path(c.run_dir) / "verify" : output_dir(o, c);
  if (kind == "verify") c.run_dir = fs::path(c.run_dir).string();
  const auto r = run(c, out);
  if (kind == "verify") {
    const auto j = nlohmann::json::parse(read_file(out / "verify.json"), nullptr, false);
    if (!j.is_discarded())
      for (const auto& ch : j["checks"])
        std::cout << (ch["passed"].get<bool>() ? "PASS " : "FAIL ") << ch["label"].get<std::string>() << "  "
                  << ch["detail"].get<std::string>() << "\n";
  }
  if (r.exit_code != exit_ok) {
    std::cerr << "error: " << r.message << "\n";
    return r.exit_code;
  }
  std::cout << kind << ": wrote " << r.files.size() << " files to " << out.string() << "\n";
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear Bloch waves near band edges"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::map<std::string, Common> opts;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"bands", "band structure and spectral edges"},
      {"levelset", "k-points on a level set of the band structure"},
      {"modeset", "mode selection and assumption checks"},
      {"acme", "amplitude equations and their solutions"},
      {"nlb-continue", "continue a nonlinear Bloch wave branch"},
      {"converge", "convergence of NLBs to the asymptotic approximation"},
      {"line-continue", "continue localized solutions on the line"},
      {"evolve", "time evolution of a perturbed NLB"},
      {"verify", "compare a run directory against a reference"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    auto& o = opts[name];
    sub->add_option("--config", o.config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "random seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : exit_config;
  }
  for (const auto& [name, help] : commands)
    if (app.got_subcommand(name)) return execute(name, opts[name]);
  return exit_config;
}
