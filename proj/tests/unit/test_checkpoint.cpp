#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <limits>

#include "enfc/error.hpp"
#include "enfc/models.hpp"
#include "enfc/synthetic.hpp"

using namespace enfc;

namespace {

ModelCheckpoint sample_model(HeadKind head) {
    SyntheticConfig cfg;
    cfg.n_trials = 10;
    cfg.seed = 2;
    const auto data = generate_synthetic(cfg);
    ModelCheckpoint m;
    m.head = head;
    m.encoder = Encoder::fit(data.trials);
    m.backbone.d_emb = data.embeddings.dim;
    m.backbone.d_cat = m.encoder.cat_width();
    m.train.seed = 99;
    m.meta.seed = 99;
    m.meta.epochs_run = 3;
    m.meta.best_epoch = 2;
    m.meta.dev_metric = "mae";
    m.meta.best_dev_metric = 12.5;
    m.meta.dev_history = {14.0, 12.5, 13.25};
    m.meta.train_loss_history = {0.9, 0.7, 0.6};
    Rng rng(3);
    init_parameters(m.weights, m.backbone, head, rng);
    return m;
}

void put_byte(std::string& bytes, std::size_t pos, unsigned v) { bytes[pos] = static_cast<char>(v); }

}  // namespace

TEST_CASE("checkpoint round trip is exact") {
    for (auto h : {HeadKind::Deterministic, HeadKind::Gamma, HeadKind::PoissonGamma}) {
        const auto m = sample_model(h);
        const std::string bytes = serialize_checkpoint(m);
        CHECK(bytes.substr(0, 4) == "ENFC");
        const auto back = deserialize_checkpoint(bytes);
        CHECK(back == m);
        CHECK(serialize_checkpoint(back) == bytes);
    }
}

TEST_CASE("checkpoint corruption maps to distinct errors") {
    const std::string good = serialize_checkpoint(sample_model(HeadKind::Gamma));

    std::string magic = good;
    put_byte(magic, 0, 'X');
    CHECK_THROWS_AS(deserialize_checkpoint(magic), FormatError);

    std::string version = good;
    put_byte(version, 4, kCheckpointVersion + 1);
    CHECK_THROWS_AS(deserialize_checkpoint(version), VersionError);

    CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, good.size() - 9)), SizeMismatchError);
    CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, 10)), SizeMismatchError);
    CHECK_THROWS_AS(deserialize_checkpoint(good + "x"), SizeMismatchError);

    std::string payload = good;
    payload[good.size() - 20] ^= 0x01;
    CHECK_THROWS_AS(deserialize_checkpoint(payload), ChecksumError);

    std::string crc = good;
    crc[good.size() - 1] ^= 0x80;
    CHECK_THROWS_AS(deserialize_checkpoint(crc), ChecksumError);

    // Every error is a DataError, so callers can catch one type.
    CHECK_THROWS_AS(deserialize_checkpoint(crc), DataError);
}

TEST_CASE("non-finite weights are refused") {
    auto m = sample_model(HeadKind::Deterministic);
    m.weights.entries().front().value[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(serialize_checkpoint(m), NumericError);
}

TEST_CASE("checkpoint files") {
    const auto dir = std::filesystem::temp_directory_path() / "enfc_test_checkpoint";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.enfc";
    const auto m = sample_model(HeadKind::PoissonGamma);
    save_checkpoint(path, m);
    CHECK(load_checkpoint(path) == m);

    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << "junk";
    }
    try {
        load_checkpoint(path);
        FAIL("expected SizeMismatchError");
    } catch (const SizeMismatchError& e) {
        CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.enfc"), DataError);
    std::filesystem::remove_all(dir);
}
