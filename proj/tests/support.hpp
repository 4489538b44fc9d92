#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <string>

#include "pulse/batch.hpp"
#include "pulse/store.hpp"
#include "pulse/synth.hpp"

namespace pulse::testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "pulse-test-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string fixture_path(const std::string& rel) { return std::string(PULSE_FIXTURE_DIR) + "/" + rel; }

// The store the recorded transcripts were made against:
// `pulse_agent synth --recordings 3 --users 2` (default seed).
inline synth::CorpusSpec agent_corpus_spec() {
  synth::CorpusSpec spec;
  spec.recordings = 3;
  spec.users = 2;
  return spec;
}

inline std::shared_ptr<store::DataStore> seeded_agent_store(const TempDir& dir) {
  auto ds = std::make_shared<store::DataStore>(store::StoreConfig{dir.str()});
  batch::seed_store(*ds, agent_corpus_spec());
  return ds;
}

// Numbers in a prompt (each run of digits with an optional fraction counts
// once). An upper bound on the sample-derived literals a prompt carries.
inline std::size_t count_numeric_literals(const std::string& prompt) {
  static const std::regex re(R"([0-9]+(\.[0-9]+)?)");
  return static_cast<std::size_t>(std::distance(std::sregex_iterator(prompt.begin(), prompt.end(), re),
                                                std::sregex_iterator()));
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace pulse::testing
