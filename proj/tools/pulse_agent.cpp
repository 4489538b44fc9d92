// pulse_agent: ingest, evaluate, serve, ask, plus corpus and fixture helpers.

#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pulse/agent/orchestrator.hpp"
#include "pulse/batch.hpp"
#include "pulse/config.hpp"
#include "pulse/error.hpp"
#include "pulse/service.hpp"

using namespace pulse;

namespace {

service::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

AppConfig resolve_config(const std::string& path, const std::string& data_root) {
  AppConfig cfg = path.empty() ? AppConfig{} : load_config(path);
  if (!data_root.empty()) cfg.store.data_root = data_root;
  if (cfg.store.data_root.empty()) throw Error(ErrorCode::InvalidArgument, "no data root: pass --data-root or set data_root");
  return cfg;
}

double parse_start(const std::string& text, int utc_offset_minutes) {
  if (text.find('-', 1) != std::string::npos && text.find(':') != std::string::npos) {
    return store::parse_local_time(text, utc_offset_minutes);
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::InvalidArgument, fmt::format("--start '{}' is neither epoch seconds nor a local time", text));
}

void print_outcome(const agent::SessionOutcome& outcome) {
  if (const auto* r = std::get_if<agent::AgentResponse>(&outcome)) {
    fmt::print("{}\n", r->text);
  } else if (const auto* c = std::get_if<agent::ClarificationRequest>(&outcome)) {
    fmt::print("? {}\n", c->text);
  } else {
    const auto& f = std::get<agent::SessionFailure>(outcome);
    fmt::print(stderr, "error: {}: {}\n", to_string(f.code), f.message);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heart-rate analysis agent: PPG/ECG pipelines, evaluation and a query service"};
  app.require_subcommand(1);
  std::string config_path;
  std::string data_root;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--data-root", data_root, "datastore directory (overrides config)");

  auto* ingest = app.add_subcommand("ingest", "add a t_offset_s,value CSV recording to the store");
  std::string csv_path, user, modality = "PPG", start;
  double rate = 0.0;
  ingest->add_option("csv", csv_path, "recording CSV")->required();
  ingest->add_option("--user", user)->required();
  ingest->add_option("--modality", modality, "PPG or ECG_LEAD_II");
  ingest->add_option("--start", start, "epoch seconds or local YYYY-MM-DDTHH:MM[:SS]")->required();
  ingest->add_option("--rate", rate, "sample rate in Hz")->required();

  auto* evaluate = app.add_subcommand("evaluate", "run both pipelines over paired recordings and write the report");
  std::string out_dir;
  unsigned threads = 0;
  evaluate->add_option("--out", out_dir, "report directory")->required();
  evaluate->add_option("--threads", threads, "worker threads (0 = all cores)");

  auto* serve = app.add_subcommand("serve", "start the HTTP service");
  int port = -1;
  std::string host;
  serve->add_option("--port", port, "listen port (0 picks a free one)");
  serve->add_option("--host", host, "bind address (default loopback)");

  auto* ask = app.add_subcommand("ask", "interactive queries against a local orchestrator");
  std::string ask_user;
  ask->add_option("--user", ask_user, "user the questions are about")->required();

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic paired PPG/ECG corpus into the store");
  synth::CorpusSpec spec;
  synth_cmd->add_option("--recordings", spec.recordings);
  synth_cmd->add_option("--users", spec.users);
  synth_cmd->add_option("--duration", spec.duration_s, "seconds per recording");
  synth_cmd->add_option("--seed", spec.seed);

  auto* record = app.add_subcommand("record-fixture", "answer queries with the heuristic backend and save the transcript");
  std::vector<std::string> queries;
  std::string transcript_out;
  record->add_option("--query", queries, "query text (repeatable, run as one session)")->required();
  record->add_option("--out", transcript_out, "transcript JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const AppConfig cfg = resolve_config(config_path, data_root);
      store::DataStore ds(cfg.store);
      const store::RecordingMeta m = ds.ingest_file(
          csv_path, {user, channel_from_string(modality), parse_start(start, cfg.store.utc_offset_minutes), rate});
      fmt::print("{}\n", store::to_json(m).dump());
    } else if (*evaluate) {
      const AppConfig cfg = resolve_config(config_path, data_root);
      store::DataStore ds(cfg.store);
      const eval::EvaluationReport rep = batch::evaluate_store(ds, cfg, threads);
      rep.write(out_dir);
      fmt::print("{} recordings, {} paired windows: MAE {:.3f} BPM, bias {:.3f} BPM, outliers {:.2f}%\n",
                 rep.recordings.size(), rep.metrics.n, rep.metrics.mae, rep.agreement ? rep.agreement->bias : 0.0,
                 rep.outliers.outlier_pct);
    } else if (*serve) {
      AppConfig cfg = resolve_config(config_path, data_root);
      if (!host.empty()) cfg.host = host;
      if (port >= 0) cfg.port = port;
      auto ds = std::make_shared<store::DataStore>(cfg.store);
      service::Service svc(cfg, make_backend(cfg.llm), ds);
      const int bound = svc.bind(cfg.host, cfg.port);
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      fmt::print("listening on http://{}:{}\n", cfg.host, bound);
      std::fflush(stdout);
      svc.listen();
      g_service = nullptr;
    } else if (*ask) {
      const AppConfig cfg = resolve_config(config_path, data_root);
      auto llm = make_backend(cfg.llm);
      const agent::TaskRegistry registry = agent::default_registry();
      agent::TaskContext ctx{std::make_shared<store::DataStore>(cfg.store), cfg.ppg, cfg.qrs};
      agent::DataPipe pipe;
      std::vector<agent::Turn> history{{"user", fmt::format("My questions are about user {}.", ask_user)}};
      std::string line;
      fmt::print("> ");
      std::fflush(stdout);
      while (std::getline(std::cin, line)) {
        if (line == "quit" || line == "exit") break;
        if (!line.empty()) {
          agent::SessionInput in{line, history, cfg.max_replans};
          const agent::SessionOutcome outcome = agent::run_session(in, registry, *llm, ctx, pipe);
          print_outcome(outcome);
          history.push_back({"user", line});
          if (const auto* r = std::get_if<agent::AgentResponse>(&outcome)) history.push_back({"agent", r->text});
          if (const auto* c = std::get_if<agent::ClarificationRequest>(&outcome)) history.push_back({"agent", c->text});
        }
        fmt::print("> ");
        std::fflush(stdout);
      }
    } else if (*synth_cmd) {
      const AppConfig cfg = resolve_config(config_path, data_root);
      store::DataStore ds(cfg.store);
      fmt::print("{} recordings written\n", batch::seed_store(ds, spec));
    } else if (*record) {
      const AppConfig cfg = resolve_config(config_path, data_root);
      auto rec = std::make_shared<agent::RecordingBackend>(std::make_shared<agent::HeuristicBackend>());
      const agent::TaskRegistry registry = agent::default_registry();
      agent::TaskContext ctx{std::make_shared<store::DataStore>(cfg.store), cfg.ppg, cfg.qrs};
      agent::DataPipe pipe;
      std::vector<agent::Turn> history;
      for (const std::string& q : queries) {
        const agent::SessionOutcome outcome = agent::run_session({q, history, cfg.max_replans}, registry, *rec, ctx, pipe);
        print_outcome(outcome);
        history.push_back({"user", q});
        if (const auto* r = std::get_if<agent::AgentResponse>(&outcome)) history.push_back({"agent", r->text});
        if (const auto* c = std::get_if<agent::ClarificationRequest>(&outcome)) history.push_back({"agent", c->text});
      }
      agent::save_transcript(transcript_out, rec->transcript());
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}: {}\n", to_string(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
