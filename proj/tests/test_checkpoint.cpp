#include "modlens/checkpoint.hpp"
#include "modlens/model.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace modlens;
using namespace modlens::gpt;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / name;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Re-pack a checkpoint with an edited JSON header.
std::string with_header(const std::string& bytes,
                        const std::function<void(nlohmann::json&)>& edit) {
    uint32_t header_len;
    std::memcpy(&header_len, bytes.data() + 8, 4);
    nlohmann::json header = nlohmann::json::parse(bytes.substr(12, header_len));
    edit(header);
    const std::string new_header = header.dump();
    std::string out = bytes.substr(0, 8);
    const uint32_t new_len = static_cast<uint32_t>(new_header.size());
    out.append(reinterpret_cast<const char*>(&new_len), 4);
    out += new_header;
    out += bytes.substr(12 + header_len);
    return out;
}

} // namespace

TEST_CASE("checkpoint round trip is lossless") {
    const ModelConfig cfg = ModelConfig::addition_preset();
    const auto params = init_params<float>(cfg, 42);
    CheckpointMeta meta;
    meta.iteration = 1234;
    meta.rng_seed = 42;
    meta.metrics = {{"id_acc", 0.5}};

    const auto path = temp_file("modlens_ckpt_roundtrip.ckpt");
    save_checkpoint(params, cfg, meta, path);
    const auto loaded = load_checkpoint(path);

    CHECK(loaded.config == cfg);
    CHECK(loaded.meta.iteration == 1234);
    CHECK(loaded.meta.rng_seed == 42);
    CHECK(loaded.meta.metrics.at("id_acc").get<double>() == 0.5);

    auto a = named_tensors(params);
    auto b = named_tensors(loaded.params);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first.name == b[i].first.name);
        CHECK(a[i].second->shape == b[i].second->shape);
        CHECK(a[i].second->v == b[i].second->v); // bitwise-equal floats
    }

    // Saving the same state twice gives identical bytes.
    const auto path2 = temp_file("modlens_ckpt_roundtrip2.ckpt");
    save_checkpoint(params, cfg, meta, path2);
    CHECK(read_bytes(path) == read_bytes(path2));
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("corrupted magic bytes are refused outright") {
    const ModelConfig cfg = ModelConfig::addition_preset();
    const auto params = init_params<float>(cfg, 1);
    const auto path = temp_file("modlens_ckpt_magic.ckpt");
    save_checkpoint(params, cfg, {}, path);

    auto bytes = read_bytes(path);
    bytes[0] = 'X';
    write_bytes(path, bytes);
    try {
        load_checkpoint(path);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(e.fault == CheckpointFault::bad_magic);
    }
    fs::remove(path);
}

TEST_CASE("unsupported version is a distinct error") {
    const ModelConfig cfg = ModelConfig::addition_preset();
    const auto params = init_params<float>(cfg, 1);
    const auto path = temp_file("modlens_ckpt_version.ckpt");
    save_checkpoint(params, cfg, {}, path);

    auto bytes = read_bytes(path);
    const uint32_t bad_version = 999;
    std::memcpy(bytes.data() + 4, &bad_version, 4);
    write_bytes(path, bytes);
    try {
        load_checkpoint(path);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(e.fault == CheckpointFault::bad_version);
    }
    fs::remove(path);
}

TEST_CASE("shape mismatch against the header names the tensor") {
    // A multiplication-size tensor directory presented with an addition
    // config must fail cleanly instead of loading garbage.
    const ModelConfig cfg = ModelConfig::addition_preset();
    const auto params = init_params<float>(cfg, 1);
    const auto path = temp_file("modlens_ckpt_shape.ckpt");
    save_checkpoint(params, cfg, {}, path);

    auto bytes = read_bytes(path);
    bytes = with_header(bytes, [](nlohmann::json& h) {
        for (auto& entry : h.at("tensors"))
            if (entry.at("name") == "wte") entry["shape"] = {10, 192};
    });
    write_bytes(path, bytes);
    try {
        load_checkpoint(path);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(e.fault == CheckpointFault::shape_mismatch);
        CHECK(std::string(e.what()).find("wte") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("truncated payload is a distinct error") {
    const ModelConfig cfg = ModelConfig::addition_preset();
    const auto params = init_params<float>(cfg, 1);
    const auto path = temp_file("modlens_ckpt_trunc.ckpt");
    save_checkpoint(params, cfg, {}, path);

    auto bytes = read_bytes(path);
    bytes.resize(bytes.size() - 100);
    write_bytes(path, bytes);
    try {
        load_checkpoint(path);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(e.fault == CheckpointFault::truncated);
    }
    fs::remove(path);
}

TEST_CASE("missing tensor in the directory is refused") {
    const ModelConfig cfg = ModelConfig::addition_preset();
    const auto params = init_params<float>(cfg, 1);
    const auto path = temp_file("modlens_ckpt_missing.ckpt");
    save_checkpoint(params, cfg, {}, path);

    auto bytes = read_bytes(path);
    bytes = with_header(bytes, [](nlohmann::json& h) {
        auto& dir = h.at("tensors");
        for (auto it = dir.begin(); it != dir.end(); ++it) {
            if ((*it).at("name") == "head.w") {
                dir.erase(it);
                break;
            }
        }
    });
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    fs::remove(path);
}
