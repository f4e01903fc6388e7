#include "rdstn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "rdstn/errors.hpp"

namespace rdstn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'D', 'S', 'T', 'N', 'C', 'K', '1'};

std::string serialise_payload(const std::vector<NamedArray>& arrays, ArrayDtype dtype) {
    std::string out;
    for (const auto& a : arrays) {
        if (dtype == ArrayDtype::f64) {
            out.append(reinterpret_cast<const char*>(a.values.data()), a.values.size() * sizeof(double));
        } else {
            for (double v : a.values.values()) {
                const auto f = static_cast<float>(v);
                out.append(reinterpret_cast<const char*>(&f), sizeof(float));
            }
        }
    }
    return out;
}

std::string crc_string(const std::string& bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    return std::string("crc32:") + buf;
}

const char* dtype_name(ArrayDtype d) { return d == ArrayDtype::f64 ? "f64" : "f32"; }

}  // namespace

AdamState AdamState::zeros_like(const Model& model) {
    AdamState s;
    for (const auto& p : model.parameters()) {
        s.m.emplace_back(p.var.rows(), p.var.cols());
        s.v.emplace_back(p.var.rows(), p.var.cols());
    }
    return s;
}

Checkpoint make_checkpoint(const Model& model, const AdamState* optimizer, const RunConfig& config, std::int64_t step,
                           const nlohmann::json& metric_history, const std::vector<double>& loss_history) {
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.config.model = model.config;
    ckpt.step = step;
    ckpt.metric_history = metric_history;
    ckpt.loss_history = loss_history;
    const auto params = model.parameters();
    for (const auto& p : params) ckpt.arrays.push_back({p.name, p.var.value()});
    if (optimizer) {
        if (optimizer->m.size() != params.size() || optimizer->v.size() != params.size()) {
            throw InvalidArgument("optimizer state does not match the model");
        }
        ckpt.optimizer_step = optimizer->step;
        for (std::size_t i = 0; i < params.size(); ++i) ckpt.arrays.push_back({"optim.m." + params[i].name, optimizer->m[i]});
        for (std::size_t i = 0; i < params.size(); ++i) ckpt.arrays.push_back({"optim.v." + params[i].name, optimizer->v[i]});
    }
    return ckpt;
}

std::string content_checksum(const Checkpoint& ckpt, ArrayDtype dtype) {
    return crc_string(serialise_payload(ckpt.arrays, dtype));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, ArrayDtype dtype) {
    const std::string payload = serialise_payload(ckpt.arrays, dtype);
    nlohmann::json meta;
    meta["format_version"] = 1;
    meta["config"] = to_json(ckpt.config);
    meta["step"] = ckpt.step;
    meta["optimizer_step"] = ckpt.optimizer_step;
    meta["metric_history"] = ckpt.metric_history;
    meta["loss_history"] = ckpt.loss_history;
    nlohmann::json dir = nlohmann::json::array();
    std::size_t offset = 0;
    const std::size_t elem = dtype == ArrayDtype::f64 ? sizeof(double) : sizeof(float);
    for (const auto& a : ckpt.arrays) {
        const std::size_t nbytes = a.values.size() * elem;
        dir.push_back({{"name", a.name},
                       {"shape", {a.values.rows(), a.values.cols()}},
                       {"dtype", dtype_name(dtype)},
                       {"offset", offset},
                       {"nbytes", nbytes}});
        offset += nbytes;
    }
    meta["arrays"] = dir;
    meta["payload_bytes"] = payload.size();
    meta["content_checksum"] = crc_string(payload);
    const std::string header = meta.dump();

    // Write to a sibling file first so a failed write never clobbers an
    // existing checkpoint.
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create checkpoint " + tmp.string());
        const std::uint64_t len = header.size();
        out.write(kMagic, sizeof kMagic);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        out.flush();
        if (!out) throw IoError("failed writing checkpoint " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();

    const std::string where = " in " + path.string();
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw ChecksumError("not a checkpoint or truncated header" + where);
    }
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof len);
    if (len > bytes.size() - 16) throw ChecksumError("truncated metadata" + where);

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(bytes.substr(16, len));
    } catch (const nlohmann::json::exception&) {
        throw ChecksumError("corrupt metadata" + where);
    }
    const std::string payload = bytes.substr(16 + len);
    try {
        if (payload.size() != meta.at("payload_bytes").get<std::size_t>()) {
            throw ChecksumError("payload size mismatch (truncated file?)" + where);
        }
        if (crc_string(payload) != meta.at("content_checksum").get<std::string>()) {
            throw ChecksumError("content checksum mismatch" + where);
        }

        Checkpoint ckpt;
        ckpt.config = run_config_from_json(meta.at("config"));
        ckpt.step = meta.at("step").get<std::int64_t>();
        ckpt.optimizer_step = meta.value("optimizer_step", std::int64_t{0});
        ckpt.metric_history = meta.at("metric_history");
        ckpt.loss_history = meta.at("loss_history").get<std::vector<double>>();
        for (const auto& entry : meta.at("arrays")) {
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto nbytes = entry.at("nbytes").get<std::size_t>();
            const std::string dtype = entry.at("dtype").get<std::string>();
            if (shape.size() != 2 || offset + nbytes > payload.size()) throw ChecksumError("bad array directory" + where);
            const std::size_t count = shape[0] * shape[1];
            Matrix values(shape[0], shape[1]);
            if (dtype == "f64" && nbytes == count * sizeof(double)) {
                std::memcpy(values.data(), payload.data() + offset, nbytes);
            } else if (dtype == "f32" && nbytes == count * sizeof(float)) {
                for (std::size_t i = 0; i < count; ++i) {
                    float f;
                    std::memcpy(&f, payload.data() + offset + i * sizeof(float), sizeof f);
                    values.values()[i] = f;
                }
            } else {
                throw ChecksumError("array '" + entry.at("name").get<std::string>() + "' has an inconsistent size" + where);
            }
            ckpt.arrays.push_back({entry.at("name").get<std::string>(), std::move(values)});
        }
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumError(std::string("malformed metadata: ") + e.what() + where);
    }
}

void load_parameters(Model& model, const Checkpoint& ckpt) {
    if (!(model.config == ckpt.config.model)) {
        std::ostringstream msg;
        msg << "checkpoint architecture differs from the model: checkpoint "
            << to_json(RunConfig{ckpt.config.model, {}}).dump() << " vs model "
            << to_json(RunConfig{model.config, {}}).dump();
        throw ConfigMismatch(msg.str());
    }
    std::map<std::string, const Matrix*> by_name;
    for (const auto& a : ckpt.arrays) by_name[a.name] = &a.values;
    // Check everything first so a mismatch leaves the model untouched.
    const auto params = model.parameters();
    for (const auto& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw ConfigMismatch("checkpoint lacks parameter " + p.name);
        if (!it->second->same_shape(p.var.value())) throw ConfigMismatch("shape mismatch for parameter " + p.name);
    }
    for (auto p : params) p.var.mutable_value() = *by_name.at(p.name);
}

Model restore_model(const Checkpoint& ckpt) {
    Model model = Model::create(ckpt.config.model, 0);
    load_parameters(model, ckpt);
    return model;
}

AdamState restore_optimizer(const Checkpoint& ckpt, const Model& model) {
    std::map<std::string, const Matrix*> by_name;
    for (const auto& a : ckpt.arrays) by_name[a.name] = &a.values;
    AdamState state;
    state.step = ckpt.optimizer_step;
    for (const auto& p : model.parameters()) {
        auto m = by_name.find("optim.m." + p.name);
        auto v = by_name.find("optim.v." + p.name);
        if (m == by_name.end() || v == by_name.end()) throw ConfigMismatch("checkpoint has no optimizer state for " + p.name);
        state.m.push_back(*m->second);
        state.v.push_back(*v->second);
    }
    return state;
}

}  // namespace rdstn
