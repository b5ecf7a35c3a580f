#pragma once
// Run manifest: what was run, on which inputs, producing which outputs.
// Requires linking OpenSSL::Crypto for the SHA-256 digests.

#include <chrono>
#include <ctime>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "hyperdet/errors.hpp"
#include "hyperdet/io.hpp"

namespace hyperdet {

inline std::string sha256_hex(const std::string& data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw std::runtime_error("sha256: OpenSSL digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string file_sha256(const std::string& path) { return sha256_hex(read_file(path)); }

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct FileRecord {
  std::string path;
  std::string sha256;
};

/// Written with status "running" before a command does any work and
/// rewritten with output digests and the final status afterwards.
class RunManifest {
 public:
  RunManifest(std::string path, std::string command, std::vector<std::string> argv)
      : path_(std::move(path)), command_(std::move(command)), argv_(std::move(argv)), started_(utc_timestamp()) {}

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::string& path) { inputs_.push_back({path, file_sha256(path)}); }
  void add_output(const std::string& path) { outputs_.push_back(path); }
  /// Run-specific facts that are not reproducible, such as wall-clock time.
  void set_result(const std::string& key, nlohmann::json value) { results_[key] = std::move(value); }

  void begin() const { write("running", std::nullopt); }

  void finish(int exit_code, const std::string& error = "") {
    finished_ = utc_timestamp();
    error_ = error;
    write(exit_code == 0 ? "ok" : "failed", exit_code);
  }

  const std::string& path() const { return path_; }

  nlohmann::json to_json(const std::string& status, std::optional<int> exit_code) const {
    nlohmann::json j;
    j["format"] = "hyperdet-manifest-v1";
    j["tool_version"] = HYPERDET_VERSION;
    j["command"] = command_;
    j["argv"] = argv_;
    j["config"] = config_;
    j["seed"] = seed_ ? nlohmann::json(*seed_) : nlohmann::json(nullptr);
    auto in = nlohmann::json::array();
    for (const auto& f : inputs_) in.push_back({{"path", f.path}, {"sha256", f.sha256}});
    j["inputs"] = std::move(in);
    auto out = nlohmann::json::array();
    for (const auto& p : outputs_) {
      nlohmann::json o{{"path", p}};
      // Outputs are hashed once the command has finished writing them.
      if (status != "running") {
        std::ifstream probe(p);
        o["sha256"] = probe ? nlohmann::json(file_sha256(p)) : nlohmann::json(nullptr);
      }
      out.push_back(std::move(o));
    }
    j["outputs"] = std::move(out);
    j["started_at"] = started_;
    j["finished_at"] = finished_.empty() ? nlohmann::json(nullptr) : nlohmann::json(finished_);
    j["status"] = status;
    j["exit_code"] = exit_code ? nlohmann::json(*exit_code) : nlohmann::json(nullptr);
    j["results"] = results_;
    if (!error_.empty()) j["error"] = error_;
    return j;
  }

 private:
  void write(const std::string& status, std::optional<int> exit_code) const {
    if (!path_.empty()) write_json(path_, to_json(status, exit_code));
  }

  std::string path_;
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json config_ = nlohmann::json::object();
  std::optional<std::uint64_t> seed_;
  std::vector<FileRecord> inputs_;
  std::vector<std::string> outputs_;
  nlohmann::json results_ = nlohmann::json::object();
  std::string started_;
  std::string finished_;
  std::string error_;
};

}  // namespace hyperdet
