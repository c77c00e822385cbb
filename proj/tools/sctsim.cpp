// sctsim command-line driver: ingest, run, analyze, report.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "sctsim/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sctsim;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kBackend = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags as given; unset values fall back to the config file, then defaults.
struct Flags {
  std::string config;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> agents;
  std::optional<int> iterations;
  std::optional<int> rounds;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::string> data;
  bool include_vanilla = false;
};

struct RunConfig {
  GatewayConfig gateway;
  ExperimentConfig experiment;
  std::string agents_spec = "all";
  fs::path data_dir = SCTSIM_DATA_DIR;
  fs::path out_dir = "out";

  Json echo() const {
    return {{"mode", to_string(gateway.mode)},
            {"seed", experiment.seed},
            {"agents", agents_spec},
            {"resolved_agents", experiment.agents},
            {"include_vanilla", experiment.include_vanilla},
            {"iterations", experiment.n_iterations},
            {"rounds", experiment.n_rounds},
            {"jobs", experiment.jobs},
            {"data", data_dir.string()},
            {"out", out_dir.string()},
            {"base_url", gateway.base_url},
            {"chat_model", gateway.chat_model},
            {"embed_model", gateway.embed_model},
            {"temperature", gateway.temperature}};
  }
};

Json read_config_file(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  try {
    Json j = Json::parse(in);
    if (!j.is_object()) throw UsageError("config file " + path + " must hold a JSON object");
    return j;
  } catch (const Json::parse_error& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
}

template <typename T>
T pick(const std::optional<T>& flag, const Json& cfg, const char* key, T fallback) {
  if (flag) return *flag;
  if (auto it = cfg.find(key); it != cfg.end()) {
    try {
      return it->get<T>();
    } catch (const Json::exception&) {
      throw UsageError(std::string("config key '") + key + "' has the wrong type");
    }
  }
  return fallback;
}

RunConfig resolve(const Flags& f) {
  const Json cfg = read_config_file(f.config);
  RunConfig rc;
  rc.gateway.base_url = pick<std::string>(std::nullopt, cfg, "base_url", rc.gateway.base_url);
  rc.gateway.chat_model = pick<std::string>(std::nullopt, cfg, "chat_model", rc.gateway.chat_model);
  rc.gateway.embed_model = pick<std::string>(std::nullopt, cfg, "embed_model", rc.gateway.embed_model);
  rc.gateway.temperature = pick<double>(std::nullopt, cfg, "temperature", rc.gateway.temperature);
  rc.gateway = rc.gateway.with_env();

  const auto mode_s = pick<std::string>(f.mode, cfg, "mode", "stub");
  const auto mode = parse_gateway_mode(mode_s);
  if (!mode) throw UsageError("unknown mode '" + mode_s + "' (expected stub or live)");
  rc.gateway.mode = *mode;
  rc.experiment.mode = *mode;
  rc.experiment.seed = pick<std::uint64_t>(f.seed, cfg, "seed", 42);
  rc.gateway.seed = rc.experiment.seed;
  rc.experiment.n_iterations = pick<int>(f.iterations, cfg, "iterations", 100);
  rc.experiment.n_rounds = pick<int>(f.rounds, cfg, "rounds", 6);
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  rc.experiment.jobs = pick<int>(f.jobs, cfg, "jobs", hw);
  rc.experiment.include_vanilla = f.include_vanilla || pick<bool>(std::nullopt, cfg, "include_vanilla", false);
  if (f.agents) {
    rc.agents_spec = *f.agents;
  } else if (auto it = cfg.find("agents"); it != cfg.end()) {
    rc.agents_spec = it->is_string() ? it->get<std::string>() : it->dump();
  }
  rc.data_dir = pick<std::string>(f.data, cfg, "data", SCTSIM_DATA_DIR);
  rc.out_dir = pick<std::string>(f.out, cfg, "out", "out");
  try {
    rc.gateway.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return rc;
}

// "all", a count N (first N ingested agents) or a comma-separated id list.
std::vector<std::string> select_agents(const std::string& spec, const std::vector<std::string>& available) {
  if (spec == "all") return available;
  if (!spec.empty() && std::all_of(spec.begin(), spec.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const auto n = std::stoul(spec);
    if (n > available.size())
      throw UsageError("--agents " + spec + " exceeds the " + std::to_string(available.size()) +
                       " ingested agents");
    return {available.begin(), available.begin() + static_cast<std::ptrdiff_t>(n)};
  }
  std::vector<std::string> out;
  std::stringstream ss(spec);
  for (std::string id; std::getline(ss, id, ',');) {
    if (id.empty()) continue;
    if (std::find(available.begin(), available.end(), id) == available.end())
      throw UsageError("unknown agent '" + id + "'");
    out.push_back(id);
  }
  return out;
}

EngineSettings engine_settings(GatewayMode mode) {
  EngineSettings s;
  if (mode == GatewayMode::Stub) s.retrieval_threshold = kStubRetrievalThreshold;
  return s;
}

void print_ingest(const IngestReport& rep) {
  for (const auto& e : rep.entries) {
    if (!e.error.empty()) {
      std::cerr << "FAILED " << e.file.string() << ": " << e.error << "\n";
      continue;
    }
    std::cout << e.agent_id << ": " << e.total << " factors (";
    bool first = true;
    for (Category c : kAllCategories) {
      const auto it = e.counts.find(c);
      std::cout << (first ? "" : ", ") << to_string(c) << " " << (it == e.counts.end() ? 0 : it->second);
      first = false;
    }
    std::cout << ")\n";
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_ingest(const Flags& f) {
  RunConfig rc = resolve(f);
  auto store = make_graph_store();
  auto gw = make_gateway(rc.gateway);
  const auto rep = ingest_directory(rc.data_dir / "personas", *store, *gw);
  print_ingest(rep);
  std::cout << rep.profiles.size() << " agent graph(s) built\n";
  return rep.ok() ? kOk : kData;
}

int cmd_run(const Flags& f) {
  RunConfig rc = resolve(f);
  const auto t0 = std::chrono::steady_clock::now();
  Workspace ws(DataLayout::under(rc.data_dir), rc.gateway, make_graph_store(), engine_settings(rc.gateway.mode));
  if (!ws.ingest().ok()) {
    print_ingest(ws.ingest());
    return kData;
  }
  rc.experiment.agents = select_agents(rc.agents_spec, ws.agents());
  try {
    rc.experiment.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  fs::create_directories(rc.out_dir);

  const Json echo = rc.echo();
  Json manifest = {{"version", SCTSIM_VERSION},
                   {"seed", rc.experiment.seed},
                   {"config", echo},
                   {"config_hash", hex64(fnv1a64(echo.dump()))},
                   {"expected_rows", rc.experiment.expected_rows()}};
  auto finish = [&](const char* status) {
    manifest["status"] = status;
    manifest["duration_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(rc.out_dir / "manifest.json", manifest);
  };

  try {
    const auto table = run_experiment(rc.experiment, ws.deps());
    write_observations(rc.out_dir / "observations.csv", table);
    manifest["rows"] = table.size();
    manifest["observations"] = "observations.csv";
    finish("complete");
    std::cout << "wrote " << table.size() << " rows to " << (rc.out_dir / "observations.csv").string() << "\n";
    return kOk;
  } catch (const ExperimentAborted& e) {
    write_observations(rc.out_dir / "observations.partial.csv", e.partial());
    manifest["rows"] = e.partial().size();
    manifest["observations"] = "observations.partial.csv";
    manifest["failed_unit"] = {{"agent", e.failed().agent}, {"iteration", e.failed().iteration}};
    Json done = Json::array();
    for (const auto& u : e.completed()) done.push_back({{"agent", u.agent}, {"iteration", u.iteration}});
    manifest["completed_units"] = done;
    manifest["error"] = e.what();
    finish("aborted");
    std::cerr << "run aborted: " << e.what() << "\n";
    return kBackend;
  }
}

int cmd_analyze(const std::string& csv, const Flags& f) {
  const auto obs = read_observations(fs::path(csv));
  const auto result = analyze(obs, f.seed.value_or(42));
  const fs::path out = f.out.value_or((fs::path(csv).parent_path() / "analysis").string());
  write_artifacts(out, render_analysis(result));
  std::cout << analysis_summary(result);
  std::cout << "analysis written to " << out.string() << "\n";
  return kOk;
}

int cmd_report(const std::string& dir, const Flags& f) {
  const auto files = render_report(fs::path(dir));
  const fs::path out = f.out.value_or(dir);
  write_artifacts(out, files);
  for (const auto& [name, body] : files) std::cout << (out / name).string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Persona agents under contradictory information: simulation and analysis"};
  app.set_version_flag("--version", std::string(SCTSIM_VERSION));
  app.require_subcommand(1);
  Flags f;
  std::string csv_path, analysis_dir;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file; flags override its keys");
    sub->add_option("--mode", f.mode, "stub or live")->check(CLI::IsMember({"stub", "live"}));
    sub->add_option("--seed", f.seed, "Master seed");
    sub->add_option("--data", f.data, "Data directory (personas/, scenarios.json, exemplars.json)");
  };
  auto* ingest = app.add_subcommand("ingest", "Build persona graphs from the dataset directory");
  common(ingest);
  auto* run = app.add_subcommand("run", "Run the experiment and write observations.csv");
  common(run);
  run->add_option("--agents", f.agents, "all, a count, or comma-separated agent ids");
  run->add_option("--iterations", f.iterations, "Iterations per agent");
  run->add_option("--rounds", f.rounds, "Rounds per iteration");
  run->add_option("--out", f.out, "Output directory");
  run->add_option("--jobs", f.jobs, "Worker threads");
  run->add_flag("--include-vanilla", f.include_vanilla, "Add the persona-free baseline agent");
  auto* an = app.add_subcommand("analyze", "Fit models and write analysis tables");
  an->add_option("observations", csv_path, "observations.csv")->required();
  an->add_option("--out", f.out, "Analysis output directory (default: <csv dir>/analysis)");
  an->add_option("--seed", f.seed, "Bootstrap seed");
  auto* rep = app.add_subcommand("report", "Render SVG figures from an analysis directory");
  rep->add_option("analysis_dir", analysis_dir, "Directory written by analyze")->required();
  rep->add_option("--out", f.out, "Figure output directory (default: analysis_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) return cmd_ingest(f);
    if (*run) return cmd_run(f);
    if (*an) return cmd_analyze(csv_path, f);
    if (*rep) return cmd_report(analysis_dir, f);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const GatewayError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kBackend;
  } catch (const GraphError& e) {
    std::cerr << (e.kind() == GraphError::Kind::Backend || e.kind() == GraphError::Kind::Embedder ? "backend"
                                                                                                  : "data")
              << " error: " << e.what() << "\n";
    return e.kind() == GraphError::Kind::Backend || e.kind() == GraphError::Kind::Embedder ? kBackend : kData;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
