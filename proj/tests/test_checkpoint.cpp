// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "fad/checkpoint.hpp"
#include "fad/fsio.hpp"
#include "fad/rng.hpp"

using namespace fad;
namespace fs = std::filesystem;

namespace {

Checkpoint sample_checkpoint() {
    Checkpoint ckpt;
    ckpt.manifest["model_kind"] = "unet";
    ckpt.manifest["config"] = {{"demo", 1}};
    RngStream rng(3);
    for (const auto& [name, shape] :
         std::vector<std::pair<std::string, std::vector<int>>>{
             {"layer.w", {4, 3, 3, 3}}, {"layer.b", {4}}, {"head.w", {2, 4}}}) {
        TensorRecord rec;
        rec.name = name;
        rec.value = TensorF(shape);
        rng.fill_gaussian(rec.value);
        ckpt.tensors.push_back(std::move(rec));
    }
    return ckpt;
}

}  // namespace

TEST_CASE("checkpoint round-trip is bit-exact") {
    const Checkpoint ckpt = sample_checkpoint();
    const std::string bytes = ckpt.to_bytes();
    const Checkpoint loaded = Checkpoint::from_bytes(bytes);
    CHECK(loaded.to_bytes() == bytes);
    REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
    for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
        CHECK(loaded.tensors[i].name == ckpt.tensors[i].name);
        REQUIRE(loaded.tensors[i].value.same_shape(ckpt.tensors[i].value));
        for (size_t j = 0; j < ckpt.tensors[i].value.numel(); ++j)
            REQUIRE(loaded.tensors[i].value[j] == ckpt.tensors[i].value[j]);
    }
    CHECK(loaded.model_kind() == "unet");
    CHECK(loaded.find("head.w") != nullptr);
    CHECK(loaded.find("missing") == nullptr);
}

TEST_CASE("file round-trip through save/load") {
    const fs::path dir = fs::temp_directory_path() / "fad_test_ckpt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const Checkpoint ckpt = sample_checkpoint();
    ckpt.save(dir / "m.ckpt");
    const Checkpoint loaded = Checkpoint::load(dir / "m.ckpt");
    CHECK(loaded.to_bytes() == ckpt.to_bytes());
}

TEST_CASE("corruption is detected before tensor materialization") {
    const std::string bytes = sample_checkpoint().to_bytes();
    SUBCASE("truncated payload") {
        CHECK_THROWS_WITH_AS(Checkpoint::from_bytes(bytes.substr(0, bytes.size() - 5)),
                             doctest::Contains("length mismatch"), std::runtime_error);
    }
    SUBCASE("trailing garbage") {
        CHECK_THROWS_AS(Checkpoint::from_bytes(bytes + "xx"), std::runtime_error);
    }
    SUBCASE("bad magic") {
        std::string corrupt = bytes;
        corrupt[0] = 'X';
        CHECK_THROWS_WITH_AS(Checkpoint::from_bytes(corrupt),
                             doctest::Contains("bad magic"), std::runtime_error);
    }
    SUBCASE("unsupported version") {
        Checkpoint ckpt = sample_checkpoint();
        ckpt.manifest["format_version"] = 99;
        // to_bytes overwrites the version, so tamper with the raw payload
        std::string raw = ckpt.to_bytes();
        const size_t pos = raw.find("\"format_version\":1");
        REQUIRE(pos != std::string::npos);
        raw.replace(pos, 18, "\"format_version\":9");
        CHECK_THROWS_WITH_AS(Checkpoint::from_bytes(raw), doctest::Contains("version"),
                             std::runtime_error);
    }
}

TEST_CASE("schedule survives the manifest round-trip bit-exactly") {
    const NoiseSchedule s = build_linear_schedule(200, 1e-4, 0.02);
    const nlohmann::json j = schedule_to_json(s, 1e-4, 0.02);
    // through a serialize/parse cycle, as happens inside a checkpoint file
    const nlohmann::json j2 = nlohmann::json::parse(j.dump());
    const NoiseSchedule r = schedule_from_json(j2);
    REQUIRE(r.T == s.T);
    for (size_t t = 0; t < s.beta.size(); ++t) {
        REQUIRE(r.beta[t] == s.beta[t]);
        REQUIRE(r.alpha_bar[t] == s.alpha_bar[t]);
    }
}
