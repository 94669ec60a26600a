#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "protobeam/config.hpp"
#include "protobeam/encoder.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/trainer.hpp"
#include "protobeam/version.hpp"

namespace protobeam {

// Container file: 8-byte magic, little-endian u64 JSON header length, JSON
// header, then the named float64 arrays concatenated in header order.
inline constexpr char kContainerMagic[9] = "PBWC0001";

namespace serialize_detail {

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    bool trainable = true;
    const std::vector<double>* data = nullptr;
};

inline void write_container(const std::string& path, const Json& header,
                            const std::vector<NamedArray>& arrays) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path())
        fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw IoError("write_container: cannot open '" + tmp.string() + "'");
        const std::string hs = header.dump();
        const std::uint64_t len = hs.size();
        f.write(kContainerMagic, 8);
        f.write(reinterpret_cast<const char*>(&len), sizeof(len));
        f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (const auto& a : arrays)
            f.write(reinterpret_cast<const char*>(a.data->data()),
                    static_cast<std::streamsize>(a.data->size() * sizeof(double)));
        f.flush();
        if (!f)
            throw IoError("write_container: write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec)
        throw IoError("write_container: rename to '" + path + "' failed: " + ec.message());
}

inline Json array_header(const std::vector<NamedArray>& arrays) {
    Json out = Json::array();
    for (const auto& a : arrays)
        out.push_back(Json{{"name", a.name}, {"shape", a.shape}, {"trainable", a.trainable}});
    return out;
}

struct LoadedContainer {
    Json header;
    std::vector<std::pair<std::string, std::vector<double>>> arrays;
    std::vector<std::vector<int>> shapes;
    std::vector<bool> trainable;

    int find(const std::string& name) const {
        for (int i = 0; i < static_cast<int>(arrays.size()); ++i)
            if (arrays[static_cast<std::size_t>(i)].first == name)
                return i;
        return -1;
    }
};

inline LoadedContainer read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("read_container: cannot open '" + path + "'");
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kContainerMagic, 8) != 0)
        throw FormatError("read_container: '" + path + "' is not a protobeam container");
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    if (!f)
        throw FormatError("read_container: truncated header in '" + path + "'");
    LoadedContainer out;
    try {
        out.header = Json::parse(hs);
    } catch (const Json::exception& e) {
        throw FormatError("read_container: bad header JSON in '" + path + "': " + e.what());
    }
    for (const auto& aj : out.header.at("arrays")) {
        const std::string name = aj.at("name").get<std::string>();
        const std::vector<int> shape = aj.at("shape").get<std::vector<int>>();
        std::size_t n = 1;
        for (int d : shape)
            n *= static_cast<std::size_t>(d);
        std::vector<double> data(n);
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(n * sizeof(double)));
        if (!f)
            throw FormatError("read_container: truncated array '" + name + "' in '" + path + "'");
        out.arrays.emplace_back(name, std::move(data));
        out.shapes.push_back(shape);
        out.trainable.push_back(aj.value("trainable", true));
    }
    return out;
}

inline void append_weights(std::vector<NamedArray>& arrays, const EncoderWeights& w,
                           const std::string& prefix) {
    for (const auto& p : w.params)
        arrays.push_back(NamedArray{prefix + p.name, p.shape, p.trainable, &p.v});
}

// Rebuilds weights from prefixed arrays, validating shapes against a fresh
// init from the stored config.
inline EncoderWeights restore_weights(const LoadedContainer& c, const EncoderConfig& cfg,
                                      std::uint64_t init_seed, const std::string& prefix) {
    EncoderWeights w = encoder_init(cfg, init_seed);
    for (auto& p : w.params) {
        const int idx = c.find(prefix + p.name);
        if (idx < 0)
            throw FormatError("container: missing array '" + prefix + p.name + "'");
        const auto& src = c.arrays[static_cast<std::size_t>(idx)].second;
        if (src.size() != p.v.size())
            throw FormatError("container: array '" + prefix + p.name + "' has " +
                              std::to_string(src.size()) + " values, expected " +
                              std::to_string(p.v.size()));
        p.v = src;
    }
    return w;
}

} // namespace serialize_detail

// --- model container ---------------------------------------------------------

inline void save_model(const std::string& path, const Model& model) {
    using namespace serialize_detail;
    Json header{{"format", "protobeam-container"},
                {"version", 1},
                {"kind", "model"},
                {"artifact_version", kVersion},
                {"encoder_config", to_json(model.weights.config)},
                {"init_seed", model.weights.init_seed},
                {"data_normalization", model.data_normalization},
                {"prototype_normalization", model.prototype_normalization}};
    if (model.minmax.has_value())
        header["minmax"] = Json{{"x_min", model.minmax->x_min}, {"x_max", model.minmax->x_max}};
    else
        header["minmax"] = nullptr;
    std::vector<NamedArray> arrays;
    append_weights(arrays, model.weights, "w.");
    header["arrays"] = array_header(arrays);
    write_container(path, header, arrays);
}

inline Model load_model(const std::string& path) {
    using namespace serialize_detail;
    const LoadedContainer c = read_container(path);
    const std::string kind = c.header.value("kind", "");
    if (kind != "model" && kind != "checkpoint")
        throw FormatError("load_model: '" + path + "' has unknown kind '" + kind + "'");
    Model m;
    const EncoderConfig cfg =
        encoder_from_json(c.header.at("encoder_config"), "container.encoder_config");
    const std::uint64_t init_seed = c.header.at("init_seed").get<std::uint64_t>();
    m.data_normalization = c.header.value("data_normalization", true);
    m.prototype_normalization = c.header.value("prototype_normalization", true);
    if (c.header.contains("minmax") && !c.header.at("minmax").is_null()) {
        MinMaxStats s;
        s.x_min = c.header.at("minmax").at("x_min").get<double>();
        s.x_max = c.header.at("minmax").at("x_max").get<double>();
        m.minmax = s;
    }
    // Checkpoints store the live weights under "w." and the best snapshot
    // under "best."; a model load prefers the snapshot when present.
    const std::string prefix =
        (kind == "checkpoint" && c.header.value("has_best", false)) ? "best." : "w.";
    m.weights = restore_weights(c, cfg, init_seed, prefix);
    return m;
}

// --- training checkpoint ------------------------------------------------------

inline void save_checkpoint(const std::string& path, const Trainer& t) {
    using namespace serialize_detail;
    Json log_rows = Json::array();
    for (const auto& r : t.log_.rows)
        log_rows.push_back(Json::array({r.episode, r.loss, r.lr, r.val_accuracy, r.has_val}));
    const bool has_best = t.best_episode_ > 0;
    Json header{{"format", "protobeam-container"},
                {"version", 1},
                {"kind", "checkpoint"},
                {"artifact_version", kVersion},
                {"encoder_config", to_json(t.enc_cfg_)},
                {"init_seed", t.weights_.init_seed},
                {"data_normalization", t.cfg_.data_normalization},
                {"prototype_normalization", t.cfg_.prototype_normalization},
                {"has_best", has_best},
                {"trainer",
                 Json{{"train_config", to_json(t.cfg_)},
                      {"episode", t.episode_},
                      {"lr", t.lr_},
                      {"best_val", t.best_val_},
                      {"best_episode", t.best_episode_},
                      {"episodes_since_best", t.episodes_since_best_},
                      {"decays_since_best", t.decays_since_best_},
                      {"stopped", t.stopped_},
                      {"adam_t", t.opt_.t},
                      {"stats_fitted", t.stats_fitted_},
                      {"sample_rng", t.sample_rng_.save_state()},
                      {"augment_rng", t.augment_rng_.save_state()},
                      {"log_best_val", t.log_.best_val_accuracy},
                      {"log_best_episode", t.log_.best_episode},
                      {"log_seed", t.log_.seed},
                      {"log_rows", log_rows}}}};
    if (t.stats_fitted_)
        header["minmax"] = Json{{"x_min", t.stats_.x_min}, {"x_max", t.stats_.x_max}};
    else
        header["minmax"] = nullptr;

    std::vector<NamedArray> arrays;
    append_weights(arrays, t.weights_, "w.");
    if (has_best)
        append_weights(arrays, t.best_weights_, "best.");
    for (std::size_t i = 0; i < t.weights_.params.size(); ++i) {
        arrays.push_back(NamedArray{"m." + t.weights_.params[i].name, t.weights_.params[i].shape,
                                    t.weights_.params[i].trainable, &t.opt_.m[i]});
        arrays.push_back(NamedArray{"v." + t.weights_.params[i].name, t.weights_.params[i].shape,
                                    t.weights_.params[i].trainable, &t.opt_.v[i]});
    }
    header["arrays"] = array_header(arrays);
    write_container(path, header, arrays);
}

inline Trainer load_checkpoint(const std::string& path) {
    using namespace serialize_detail;
    const LoadedContainer c = read_container(path);
    if (c.header.value("kind", "") != "checkpoint")
        throw FormatError("load_checkpoint: '" + path + "' is not a training checkpoint");
    const Json& tj = c.header.at("trainer");
    const TrainConfig cfg = train_from_json(tj.at("train_config"), "checkpoint.train_config");
    const EncoderConfig enc =
        encoder_from_json(c.header.at("encoder_config"), "checkpoint.encoder_config");

    Trainer t(cfg, enc);
    const std::uint64_t init_seed = c.header.at("init_seed").get<std::uint64_t>();
    t.weights_ = restore_weights(c, enc, init_seed, "w.");
    t.episode_ = tj.at("episode").get<int>();
    t.lr_ = tj.at("lr").get<double>();
    t.best_val_ = tj.at("best_val").get<double>();
    t.best_episode_ = tj.at("best_episode").get<int>();
    t.episodes_since_best_ = tj.at("episodes_since_best").get<int>();
    t.decays_since_best_ = tj.at("decays_since_best").get<int>();
    t.stopped_ = tj.at("stopped").get<bool>();
    t.stats_fitted_ = tj.at("stats_fitted").get<bool>();
    if (t.stats_fitted_) {
        t.stats_.x_min = c.header.at("minmax").at("x_min").get<double>();
        t.stats_.x_max = c.header.at("minmax").at("x_max").get<double>();
    }
    t.sample_rng_.load_state(tj.at("sample_rng").get<std::string>());
    t.augment_rng_.load_state(tj.at("augment_rng").get<std::string>());
    if (c.header.value("has_best", false))
        t.best_weights_ = restore_weights(c, enc, init_seed, "best.");

    t.opt_.init_like(t.weights_);
    t.opt_.t = tj.at("adam_t").get<std::int64_t>();
    for (std::size_t i = 0; i < t.weights_.params.size(); ++i) {
        const int mi = c.find("m." + t.weights_.params[i].name);
        const int vi = c.find("v." + t.weights_.params[i].name);
        if (mi < 0 || vi < 0)
            throw FormatError("load_checkpoint: missing optimizer arrays for '" +
                              t.weights_.params[i].name + "'");
        t.opt_.m[i] = c.arrays[static_cast<std::size_t>(mi)].second;
        t.opt_.v[i] = c.arrays[static_cast<std::size_t>(vi)].second;
    }

    t.log_.rows.clear();
    t.log_.seed = tj.at("log_seed").get<std::uint64_t>();
    t.log_.best_val_accuracy = tj.at("log_best_val").get<double>();
    t.log_.best_episode = tj.at("log_best_episode").get<int>();
    for (const auto& rj : tj.at("log_rows")) {
        TrainingLog::Row r;
        r.episode = rj.at(0).get<int>();
        r.loss = rj.at(1).get<double>();
        r.lr = rj.at(2).get<double>();
        r.val_accuracy = rj.at(3).get<double>();
        r.has_val = rj.at(4).get<bool>();
        t.log_.rows.push_back(r);
    }
    return t;
}

// --- CSV views ---------------------------------------------------------------

inline void write_training_log_csv(const std::string& path, const TrainingLog& log) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : log.rows) {
        rows.push_back({std::to_string(r.episode), csv_double(r.loss), csv_double(r.lr),
                        r.has_val ? csv_double(r.val_accuracy) : std::string()});
    }
    write_csv(path, log.seed, {"episode", "loss", "lr", "val_accuracy"}, rows);
}

} // namespace protobeam
