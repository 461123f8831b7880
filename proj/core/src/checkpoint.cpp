#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "enfc/error.hpp"
#include "enfc/models.hpp"

namespace enfc {
namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'E', 'N', 'F', 'C'};
constexpr std::size_t kHeaderBytes = 16;  // magic, version, manifest length
constexpr std::size_t kCrcBytes = 4;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_le(std::string_view bytes, std::size_t pos, int width) {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    }
    return v;
}

std::uint32_t crc_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t pos = 0; pos < bytes.size(); pos += kChunk) {
        const std::size_t n = std::min(kChunk, bytes.size() - pos);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

json backbone_json(const BackboneConfig& c) {
    return {{"d_emb", c.d_emb},   {"d_cat", c.d_cat},
            {"d_num", c.d_num},   {"hidden", c.hidden},
            {"heads", c.heads},   {"cat_dropout", c.cat_dropout},
            {"branch_layers", c.branch_layers}};
}

json train_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size},     {"input_lr", c.input_lr}, {"body_lr", c.body_lr},
            {"weight_decay", c.weight_decay}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
            {"seed", c.seed}};
}

json meta_json(const TrainingMeta& m) {
    return {{"seed", m.seed},
            {"epochs_run", m.epochs_run},
            {"best_epoch", m.best_epoch},
            {"dev_metric", m.dev_metric},
            {"best_dev_metric", m.best_dev_metric},
            {"dev_history", m.dev_history},
            {"train_loss_history", m.train_loss_history}};
}

ModelCheckpoint from_manifest(const json& j) {
    ModelCheckpoint m;
    m.head = parse_head_kind(j.at("head").get<std::string>());
    const json& b = j.at("backbone");
    b.at("d_emb").get_to(m.backbone.d_emb);
    b.at("d_cat").get_to(m.backbone.d_cat);
    b.at("d_num").get_to(m.backbone.d_num);
    b.at("hidden").get_to(m.backbone.hidden);
    b.at("heads").get_to(m.backbone.heads);
    b.at("cat_dropout").get_to(m.backbone.cat_dropout);
    b.at("branch_layers").get_to(m.backbone.branch_layers);
    const json& t = j.at("train");
    t.at("batch_size").get_to(m.train.batch_size);
    t.at("input_lr").get_to(m.train.input_lr);
    t.at("body_lr").get_to(m.train.body_lr);
    t.at("weight_decay").get_to(m.train.weight_decay);
    t.at("max_epochs").get_to(m.train.max_epochs);
    t.at("patience").get_to(m.train.patience);
    t.at("seed").get_to(m.train.seed);
    const json& mt = j.at("meta");
    mt.at("seed").get_to(m.meta.seed);
    mt.at("epochs_run").get_to(m.meta.epochs_run);
    mt.at("best_epoch").get_to(m.meta.best_epoch);
    mt.at("dev_metric").get_to(m.meta.dev_metric);
    mt.at("best_dev_metric").get_to(m.meta.best_dev_metric);
    mt.at("dev_history").get_to(m.meta.dev_history);
    mt.at("train_loss_history").get_to(m.meta.train_loss_history);
    from_json(j.at("encoder"), m.encoder);
    return m;
}

}  // namespace

std::string serialize_checkpoint(const ModelCheckpoint& model) {
    json tensors = json::array();
    std::uint64_t offset = 0;
    for (const auto& p : model.weights.entries()) {
        for (double v : p.value.values()) {
            if (!std::isfinite(v)) throw NumericError("checkpoint: parameter '" + p.name + "' is not finite");
        }
        tensors.push_back({{"name", p.name},
                           {"group", p.group},
                           {"shape", p.value.shape()},
                           {"offset", offset},
                           {"count", p.value.size()}});
        offset += p.value.size();
    }
    json manifest = {{"format", "enfc-checkpoint"},
                     {"head", to_string(model.head)},
                     {"backbone", backbone_json(model.backbone)},
                     {"train", train_json(model.train)},
                     {"encoder", model.encoder},
                     {"meta", meta_json(model.meta)},
                     {"tensors", std::move(tensors)}};
    const std::string text = manifest.dump();

    std::string out;
    out.reserve(kHeaderBytes + text.size() + offset * 8 + kCrcBytes);
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, text.size());
    out += text;
    for (const auto& p : model.weights.entries()) {
        for (double v : p.value.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    put_u32(out, crc_of(out));
    return out;
}

ModelCheckpoint deserialize_checkpoint(std::string_view bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic (expected ENFC)");
    }
    if (bytes.size() < kHeaderBytes + kCrcBytes) throw SizeMismatchError("checkpoint: truncated header");
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t manifest_len = get_le(bytes, 8, 8);
    if (manifest_len > bytes.size() - kHeaderBytes - kCrcBytes) {
        throw SizeMismatchError("checkpoint: truncated manifest (" + std::to_string(manifest_len) + " bytes declared, " +
                                std::to_string(bytes.size()) + " in file)");
    }
    const auto checksum_ok = [&] {
        const std::size_t body = bytes.size() - kCrcBytes;
        return crc_of(bytes.substr(0, body)) == static_cast<std::uint32_t>(get_le(bytes, body, 4));
    };

    json manifest;
    try {
        manifest = json::parse(bytes.substr(kHeaderBytes, manifest_len));
    } catch (const json::exception& e) {
        if (!checksum_ok()) throw ChecksumError("checkpoint: CRC32 mismatch");
        throw FormatError(std::string("checkpoint: invalid manifest: ") + e.what());
    }

    std::uint64_t scalars = 0;
    try {
        for (const auto& t : manifest.at("tensors")) scalars += t.at("count").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: invalid tensor directory: ") + e.what());
    }
    const std::uint64_t expected = kHeaderBytes + manifest_len + scalars * 8 + kCrcBytes;
    if (bytes.size() != expected) {
        throw SizeMismatchError("checkpoint: expected " + std::to_string(expected) + " bytes, found " +
                                std::to_string(bytes.size()));
    }
    if (!checksum_ok()) throw ChecksumError("checkpoint: CRC32 mismatch");

    ModelCheckpoint model;
    try {
        model = from_manifest(manifest);
        const std::size_t payload = kHeaderBytes + manifest_len;
        for (const auto& t : manifest.at("tensors")) {
            const Shape shape = t.at("shape").get<Shape>();
            const auto count = t.at("count").get<std::uint64_t>();
            const auto off = t.at("offset").get<std::uint64_t>();
            if (shape_size(shape) != count || off + count > scalars) {
                throw FormatError("checkpoint: tensor '" + t.at("name").get<std::string>() + "' has inconsistent size");
            }
            std::vector<double> values(count);
            for (std::uint64_t i = 0; i < count; ++i) {
                values[i] = std::bit_cast<double>(get_le(bytes, payload + (off + i) * 8, 8));
            }
            model.weights.add(t.at("name").get<std::string>(), Tensor(shape, std::move(values)),
                              t.at("group").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: invalid manifest: ") + e.what());
    } catch (const UsageError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return model;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& model) {
    const std::string bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return deserialize_checkpoint(buf.str());
    } catch (const ChecksumError& e) {
        throw ChecksumError(path.string() + ": " + e.what());
    } catch (const VersionError& e) {
        throw VersionError(path.string() + ": " + e.what());
    } catch (const SizeMismatchError& e) {
        throw SizeMismatchError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace enfc
