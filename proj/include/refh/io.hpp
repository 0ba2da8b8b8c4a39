#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "refh/harmonium.hpp"
#include "refh/temporal.hpp"
#include "refh/worldgen.hpp"

namespace refh::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Shortest decimal string that parses back to exactly `v`.
inline std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc{}) throw std::runtime_error("fmt: conversion failed");
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw std::runtime_error("bad number: " + std::string(s));
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

inline std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return in;
}

inline std::string read_text(const fs::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Parameters and checkpoints

inline json to_json(const LayerSpec& s) {
    json j = json::array();
    for (const auto& b : s.blocks()) j.push_back({{"family", std::string(to_string(b.family))}, {"count", b.count}});
    return j;
}

inline LayerSpec layer_spec_from_json(const json& j) {
    std::vector<LayerBlock> blocks;
    for (const auto& b : j) blocks.push_back({unit_family_from_string(b.at("family").get<std::string>()), b.at("count").get<std::size_t>()});
    return LayerSpec(std::move(blocks));
}

inline json to_json(const Matrix& m) {
    json j = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        j.push_back(std::move(row));
    }
    return j;
}

inline Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
    if (static_cast<Eigen::Index>(j.size()) != rows) throw std::runtime_error("checkpoint: matrix row count mismatch");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(row.size()) != cols) throw std::runtime_error("checkpoint: matrix column count mismatch");
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
    return m;
}

inline json to_json(const Vector& v) {
    json j = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

inline Vector vector_from_json(const json& j, Eigen::Index n) {
    if (static_cast<Eigen::Index>(j.size()) != n) throw std::runtime_error("checkpoint: vector length mismatch");
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

inline json to_json(const HarmoniumParams& p) {
    return {{"obs_spec", to_json(p.obs_spec)}, {"rcrnt_spec", to_json(p.rcrnt_spec)}, {"hid_spec", to_json(p.hid_spec)},
            {"W", to_json(p.W)}, {"U", to_json(p.U)}, {"b_hid", to_json(p.b_hid)}, {"b_obs", to_json(p.b_obs)},
            {"b_rcrnt", to_json(p.b_rcrnt)}};
}

inline HarmoniumParams params_from_json(const json& j) {
    HarmoniumParams p = HarmoniumParams::zeros(layer_spec_from_json(j.at("obs_spec")), layer_spec_from_json(j.at("rcrnt_spec")),
                                               layer_spec_from_json(j.at("hid_spec")));
    p.W = matrix_from_json(j.at("W"), p.W.rows(), p.W.cols());
    p.U = matrix_from_json(j.at("U"), p.U.rows(), p.U.cols());
    p.b_hid = vector_from_json(j.at("b_hid"), p.b_hid.size());
    p.b_obs = vector_from_json(j.at("b_obs"), p.b_obs.size());
    p.b_rcrnt = vector_from_json(j.at("b_rcrnt"), p.b_rcrnt.size());
    p.validate();
    return p;
}

inline json to_json(const GradientSet& g) {
    return {{"W", to_json(g.dW)}, {"U", to_json(g.dU)}, {"b_hid", to_json(g.db_hid)}, {"b_obs", to_json(g.db_obs)},
            {"b_rcrnt", to_json(g.db_rcrnt)}};
}

inline GradientSet gradient_from_json(const json& j, const HarmoniumParams& shape) {
    GradientSet g = GradientSet::zeros_like(shape);
    g.dW = matrix_from_json(j.at("W"), g.dW.rows(), g.dW.cols());
    g.dU = matrix_from_json(j.at("U"), g.dU.rows(), g.dU.cols());
    g.db_hid = vector_from_json(j.at("b_hid"), g.db_hid.size());
    g.db_obs = vector_from_json(j.at("b_obs"), g.db_obs.size());
    g.db_rcrnt = vector_from_json(j.at("b_rcrnt"), g.db_rcrnt.size());
    return g;
}

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    ModelKind kind = ModelKind::REFH;
    TrainState state;
};

inline json to_json(const Checkpoint& c) {
    return {{"format_version", kCheckpointVersion},
            {"kind", to_string(c.kind)},
            {"params", to_json(c.state.params)},
            {"train_state",
             {{"seed", c.state.seed},
              {"pretrain_done", c.state.pretrain_done},
              {"next_renewal", c.state.next_renewal},
              {"velocity", to_json(c.state.velocity)}}}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
    if (j.at("format_version").get<int>() != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported format_version");
    Checkpoint c;
    c.kind = model_kind_from_string(j.at("kind").get<std::string>());
    c.state.params = params_from_json(j.at("params"));
    const auto& ts = j.at("train_state");
    c.state.seed = ts.at("seed").get<std::uint64_t>();
    c.state.pretrain_done = ts.at("pretrain_done").get<std::size_t>();
    c.state.next_renewal = ts.at("next_renewal").get<std::size_t>();
    c.state.velocity = gradient_from_json(ts.at("velocity"), c.state.params);
    return c;
}

/// Written to a temporary file and renamed, so an interrupted run never
/// leaves a truncated checkpoint behind.
inline void save_checkpoint(const fs::path& path, const Checkpoint& c) {
    const fs::path tmp = path.string() + ".tmp";
    {
        auto out = open_out(tmp);
        out << to_json(c).dump(1) << '\n';
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const fs::path& path) { return checkpoint_from_json(json::parse(read_text(path))); }

// ---------------------------------------------------------------------------
// Datasets

struct DatasetHeader {
    std::string kind;
    std::uint64_t seed = 0;
    json config;
};

namespace detail {
inline void write_header(std::ostream& out, const DatasetHeader& h) {
    out << "# kind=" << h.kind << '\n' << "# seed=" << h.seed << '\n' << "# config=" << h.config.dump() << '\n';
}

inline DatasetHeader read_header(std::istream& in, std::string& first_line) {
    DatasetHeader h;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("# kind=", 0) == 0) h.kind = line.substr(7);
        else if (line.rfind("# seed=", 0) == 0) h.seed = std::stoull(line.substr(7));
        else if (line.rfind("# config=", 0) == 0) h.config = json::parse(line.substr(9));
        else if (line.rfind('#', 0) == 0) continue;
        else {
            first_line = line;
            return h;
        }
    }
    first_line.clear();
    return h;
}
}  // namespace detail

inline constexpr const char* kLdsObsFile = "lds_obs.csv";
inline constexpr const char* kLdsLatentFile = "lds_latent.csv";
inline constexpr const char* kBounceFramesFile = "balls_frames.rle";
inline constexpr const char* kBounceIndexFile = "balls_index.csv";

inline void save_lds_dataset(const fs::path& dir, const LdsDataset& ds, const DatasetHeader& h) {
    auto obs = open_out(dir / kLdsObsFile);
    auto lat = open_out(dir / kLdsLatentFile);
    detail::write_header(obs, h);
    detail::write_header(lat, h);
    const std::size_t units = ds.trajectories.empty() ? 0 : static_cast<std::size_t>(ds.trajectories.front().counts.rows());
    obs << "traj,t";
    for (std::size_t i = 0; i < units; ++i) obs << ",n" << i;
    obs << '\n';
    lat << "traj,t,position,velocity,gain\n";
    for (std::size_t k = 0; k < ds.trajectories.size(); ++k) {
        const auto& tr = ds.trajectories[k];
        for (Eigen::Index t = 0; t < tr.counts.cols(); ++t) {
            obs << k << ',' << t;
            for (Eigen::Index i = 0; i < tr.counts.rows(); ++i) obs << ',' << static_cast<long long>(tr.counts(i, t));
            obs << '\n';
            lat << k << ',' << t << ',' << fmt(tr.position(t)) << ',' << fmt(tr.velocity(t)) << ',' << fmt(tr.gain(t)) << '\n';
        }
    }
    if (!obs || !lat) throw std::runtime_error("write failed in " + dir.string());
}

namespace detail {
// Rows of "traj,t,values..." grouped per trajectory, in file order.
inline std::vector<std::vector<std::vector<double>>> read_traj_rows(std::istream& in, std::string line) {
    std::vector<std::vector<std::vector<double>>> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() < 3) throw std::runtime_error("dataset: short row");
        const auto k = static_cast<std::size_t>(parse_double(cells[0]));
        const auto t = static_cast<std::size_t>(parse_double(cells[1]));
        if (k == out.size()) out.emplace_back();
        if (k + 1 != out.size() || t != out[k].size()) throw std::runtime_error("dataset: rows out of order");
        std::vector<double> vals;
        for (std::size_t c = 2; c < cells.size(); ++c) vals.push_back(parse_double(cells[c]));
        out[k].push_back(std::move(vals));
    }
    return out;
}
}  // namespace detail

inline LdsDataset load_lds_dataset(const fs::path& dir, DatasetHeader* header = nullptr) {
    auto obs = open_in(dir / kLdsObsFile);
    std::string first;
    const DatasetHeader h = detail::read_header(obs, first);
    if (h.kind != "lds") throw std::runtime_error("dataset: not an LDS dataset: " + dir.string());
    const auto counts = detail::read_traj_rows(obs, first);
    auto lat = open_in(dir / kLdsLatentFile);
    detail::read_header(lat, first);
    const auto latent = detail::read_traj_rows(lat, first);
    if (latent.size() != counts.size()) throw std::runtime_error("dataset: latent file does not match observations");
    LdsDataset ds;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const auto T = static_cast<Eigen::Index>(counts[k].size());
        if (static_cast<Eigen::Index>(latent[k].size()) != T) throw std::runtime_error("dataset: latent length mismatch");
        LdsTrajectory tr;
        tr.counts.resize(static_cast<Eigen::Index>(counts[k].front().size()), T);
        tr.position.resize(T);
        tr.velocity.resize(T);
        tr.gain.resize(T);
        for (Eigen::Index t = 0; t < T; ++t) {
            const auto& row = counts[k][static_cast<std::size_t>(t)];
            if (static_cast<Eigen::Index>(row.size()) != tr.counts.rows()) throw std::runtime_error("dataset: ragged rows");
            for (std::size_t i = 0; i < row.size(); ++i) tr.counts(static_cast<Eigen::Index>(i), t) = row[i];
            const auto& l = latent[k][static_cast<std::size_t>(t)];
            if (l.size() != 3) throw std::runtime_error("dataset: latent row needs position, velocity, gain");
            tr.position(t) = l[0];
            tr.velocity(t) = l[1];
            tr.gain(t) = l[2];
        }
        ds.trajectories.push_back(std::move(tr));
    }
    if (header) *header = h;
    return ds;
}

/// Run lengths of a binary frame, alternating off/on and starting with an
/// off run (possibly 0).
inline std::vector<std::size_t> rle_encode(const Eigen::VectorXd& frame) {
    std::vector<std::size_t> runs;
    double cur = 0.0;
    std::size_t len = 0;
    for (Eigen::Index i = 0; i < frame.size(); ++i) {
        const double v = frame(i);
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("rle_encode: frame is not binary");
        if (v == cur) {
            ++len;
        } else {
            runs.push_back(len);
            cur = v;
            len = 1;
        }
    }
    runs.push_back(len);
    return runs;
}

inline Eigen::VectorXd rle_decode(const std::vector<std::size_t>& runs, std::size_t n_pixels) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_pixels));
    std::size_t pos = 0;
    double v = 0.0;
    for (std::size_t r : runs) {
        if (pos + r > n_pixels) throw std::runtime_error("rle_decode: runs exceed frame size");
        if (v == 1.0) f.segment(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(r)).setOnes();
        pos += r;
        v = 1.0 - v;
    }
    if (pos != n_pixels) throw std::runtime_error("rle_decode: runs do not cover the frame");
    return f;
}

inline void save_bounce_dataset(const fs::path& dir, const std::vector<Matrix>& trajs, std::size_t patch_size,
                                const DatasetHeader& h) {
    auto frames = open_out(dir / kBounceFramesFile);
    auto index = open_out(dir / kBounceIndexFile);
    detail::write_header(frames, h);
    frames << "# patch_size=" << patch_size << '\n';
    index << "traj,n_frames,first_line\n";
    std::size_t line = 0;
    for (std::size_t k = 0; k < trajs.size(); ++k) {
        index << k << ',' << trajs[k].cols() << ',' << line << '\n';
        for (Eigen::Index t = 0; t < trajs[k].cols(); ++t, ++line) {
            const auto runs = rle_encode(trajs[k].col(t));
            for (std::size_t i = 0; i < runs.size(); ++i) frames << (i ? " " : "") << runs[i];
            frames << '\n';
        }
    }
    if (!frames || !index) throw std::runtime_error("write failed in " + dir.string());
}

inline std::vector<Matrix> load_bounce_dataset(const fs::path& dir, std::size_t* patch_size = nullptr,
                                               DatasetHeader* header = nullptr) {
    auto frames = open_in(dir / kBounceFramesFile);
    std::string line;
    DatasetHeader h;
    std::size_t P = 0;
    std::vector<std::string> lines;
    while (std::getline(frames, line)) {
        if (line.rfind("# kind=", 0) == 0) h.kind = line.substr(7);
        else if (line.rfind("# seed=", 0) == 0) h.seed = std::stoull(line.substr(7));
        else if (line.rfind("# config=", 0) == 0) h.config = json::parse(line.substr(9));
        else if (line.rfind("# patch_size=", 0) == 0) P = std::stoull(line.substr(13));
        else if (!line.empty() && line[0] != '#') lines.push_back(line);
    }
    if (h.kind != "balls" || P == 0) throw std::runtime_error("dataset: not a bouncing-ball dataset: " + dir.string());
    auto index = open_in(dir / kBounceIndexFile);
    std::getline(index, line);
    std::vector<Matrix> out;
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 3) throw std::runtime_error("dataset: bad index row");
        const auto n = static_cast<std::size_t>(parse_double(cells[1]));
        const auto first = static_cast<std::size_t>(parse_double(cells[2]));
        if (first + n > lines.size()) throw std::runtime_error("dataset: index points past the frame file");
        Matrix m(static_cast<Eigen::Index>(P * P), static_cast<Eigen::Index>(n));
        for (std::size_t t = 0; t < n; ++t) {
            std::vector<std::size_t> runs;
            for (auto c : split(lines[first + t], ' ')) runs.push_back(static_cast<std::size_t>(parse_double(c)));
            m.col(static_cast<Eigen::Index>(t)) = rle_decode(runs, P * P);
        }
        out.push_back(std::move(m));
    }
    if (patch_size) *patch_size = P;
    if (header) *header = h;
    return out;
}

// ---------------------------------------------------------------------------
// CSV writers

class MetricsWriter {
public:
    explicit MetricsWriter(const fs::path& path, bool append = false) {
        const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        out_.open(path, append ? std::ios::binary | std::ios::app : std::ios::binary | std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        if (fresh) out_ << "epoch,batch,metric,value\n";
    }

    void write(const MetricRow& r) { out_ << r.epoch << ',' << r.batch << ',' << r.metric << ',' << fmt(r.value) << '\n'; }
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

}  // namespace refh::io
