#include "wda/checkpoint.hpp"

namespace wda {

CheckpointWriter::CheckpointWriter(const std::string& kind, std::int64_t iteration, const RunConfig& cfg) {
    ar_.write("meta/version", torch::tensor({kCheckpointVersion}));
    ar_.write("meta/kind", c10::IValue(kind));
    ar_.write("meta/iteration", torch::tensor({static_cast<int64_t>(iteration)}));
    ar_.write("meta/fingerprint", c10::IValue(config_fingerprint(cfg)));
    ar_.write("meta/config", c10::IValue(config_to_json(cfg).dump()));
}

void CheckpointWriter::module(const std::string& name, const torch::nn::Module& m) {
    torch::serialize::OutputArchive sub;
    m.save(sub);
    ar_.write("module/" + name, sub);
}

void CheckpointWriter::optimizer(const std::string& name, const torch::optim::Optimizer& opt) {
    torch::serialize::OutputArchive sub;
    opt.save(sub);
    ar_.write("optim/" + name, sub);
}

void CheckpointWriter::tensor(const std::string& name, const torch::Tensor& t) { ar_.write("tensor/" + name, t); }

void CheckpointWriter::text(const std::string& name, const std::string& value) {
    ar_.write("text/" + name, c10::IValue(value));
}

void CheckpointWriter::save(const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    const auto tmp = file.string() + ".tmp";
    ar_.save_to(tmp);
    std::filesystem::rename(tmp, file);
}

CheckpointReader::CheckpointReader(const std::filesystem::path& file) : file_(file) {
    if (!std::filesystem::exists(file)) throw LoadError("checkpoint not found: " + file.string());
    try {
        ar_.load_from(file.string());
    } catch (const c10::Error& e) {
        throw LoadError("cannot read checkpoint " + file.string() + ": " + e.what_without_backtrace());
    }
    torch::Tensor v, it;
    c10::IValue kind, fp, cfg;
    if (!ar_.try_read("meta/version", v) || !ar_.try_read("meta/kind", kind) || !ar_.try_read("meta/config", cfg))
        throw LoadError("not a checkpoint: " + file.string());
    meta_.version = v.item<int64_t>();
    if (meta_.version != kCheckpointVersion)
        throw LoadError("checkpoint version " + std::to_string(meta_.version) + " is not supported");
    meta_.kind = kind.toStringRef();
    if (ar_.try_read("meta/iteration", it)) meta_.iteration = it.item<int64_t>();
    if (ar_.try_read("meta/fingerprint", fp)) meta_.fingerprint = fp.toStringRef();
    meta_.config = json::parse(cfg.toStringRef());
}

bool CheckpointReader::has(const std::string& key) {
    torch::serialize::InputArchive sub;
    torch::Tensor t;
    c10::IValue v;
    return ar_.try_read(key, sub) || ar_.try_read(key, t) || ar_.try_read(key, v);
}

void CheckpointReader::module(const std::string& name, torch::nn::Module& m) {
    torch::serialize::InputArchive sub;
    if (!ar_.try_read("module/" + name, sub))
        throw LoadError(file_.string() + ": no module '" + name + "' (kind " + meta_.kind + ")");
    try {
        m.load(sub);
    } catch (const c10::Error& e) {
        throw ShapeError(file_.string() + ": module '" + name + "' does not fit: " + e.what_without_backtrace());
    }
}

void CheckpointReader::optimizer(const std::string& name, torch::optim::Optimizer& opt) {
    torch::serialize::InputArchive sub;
    if (!ar_.try_read("optim/" + name, sub)) throw LoadError(file_.string() + ": no optimizer '" + name + "'");
    opt.load(sub);
}

torch::Tensor CheckpointReader::tensor(const std::string& name) {
    torch::Tensor t;
    if (!ar_.try_read("tensor/" + name, t)) throw LoadError(file_.string() + ": no tensor '" + name + "'");
    return t;
}

std::string CheckpointReader::text(const std::string& name) {
    c10::IValue v;
    if (!ar_.try_read("text/" + name, v)) throw LoadError(file_.string() + ": no text '" + name + "'");
    return v.toStringRef();
}

G1 load_g1(const std::filesystem::path& file, RunConfig* cfg_out) {
    CheckpointReader r(file);
    const auto cfg = r.config();
    G1 g1(cfg.model.backbone, cfg.model.density_scale);
    r.module("g1", *g1);
    g1->eval();
    if (cfg_out) *cfg_out = cfg;
    return g1;
}

G2 load_g2(const std::filesystem::path& file, RunConfig* cfg_out) {
    CheckpointReader r(file);
    const auto cfg = r.config();
    G2 g2(cfg.model.backbone, cfg.model.density_scale);
    r.module("g2", *g2);
    g2->eval();
    if (cfg_out) *cfg_out = cfg;
    return g2;
}

}  // namespace wda
