#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>

#include "wda/config.hpp"
#include "wda/networks.hpp"

namespace wda {

inline constexpr std::int64_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::int64_t version = kCheckpointVersion;
    std::string kind;  // "g1-source", "g2-count", "g1-adapt"
    std::int64_t iteration = 0;
    std::string fingerprint;
    json config;
};

// Versioned container: meta entries, the effective config, named modules,
// optimizer states and loose tensors.
class CheckpointWriter {
public:
    CheckpointWriter(const std::string& kind, std::int64_t iteration, const RunConfig& cfg);
    void module(const std::string& name, const torch::nn::Module& m);
    void optimizer(const std::string& name, const torch::optim::Optimizer& opt);
    void tensor(const std::string& name, const torch::Tensor& t);
    void text(const std::string& name, const std::string& value);
    /// Writes to a temporary file first, then renames.
    void save(const std::filesystem::path& file);

private:
    torch::serialize::OutputArchive ar_;
};

class CheckpointReader {
public:
    explicit CheckpointReader(const std::filesystem::path& file);
    const CheckpointMeta& meta() const { return meta_; }
    RunConfig config() const { return config_from_json(meta_.config); }
    bool has(const std::string& key);
    void module(const std::string& name, torch::nn::Module& m);
    void optimizer(const std::string& name, torch::optim::Optimizer& opt);
    torch::Tensor tensor(const std::string& name);
    std::string text(const std::string& name);

private:
    std::filesystem::path file_;
    torch::serialize::InputArchive ar_;
    CheckpointMeta meta_;
};

/// Loads the "g1" module of any G1 checkpoint, rebuilt from its embedded config.
G1 load_g1(const std::filesystem::path& file, RunConfig* cfg_out = nullptr);
G2 load_g2(const std::filesystem::path& file, RunConfig* cfg_out = nullptr);

}  // namespace wda
