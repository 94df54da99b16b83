#include "sma/dataset_io.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "json.hpp"

namespace sma {

namespace fs = std::filesystem;
using nlohmann::json;

std::string write_dataset_dir(const std::string& dir, const Dataset& ds) {
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "smae";
    manifest["dim_x"] = ds.x.matrix.cols();
    manifest["dim_y"] = ds.y.matrix.cols();

    const std::pair<const char*, const std::vector<std::uint64_t>*> splits[] = {
        {"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}};
    for (const auto& [name, entities] : splits) {
        const EmbeddingBlock bx = gather_entities(ds.x, *entities);
        const EmbeddingBlock by = gather_entities(ds.y, *entities);
        const std::string fx = std::string(name) + "_x.smae";
        const std::string fy = std::string(name) + "_y.smae";
        write_embedding_file((fs::path(dir) / fx).string(), bx);
        write_embedding_file((fs::path(dir) / fy).string(), by);
        manifest["splits"][name] = {{"x", fx}, {"y", fy}};
    }
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    write_file_atomic(manifest_path, manifest.dump(2) + "\n");
    return manifest_path;
}

namespace {

void append_block(EmbeddingBlock& dst, const EmbeddingBlock& src) {
    if (dst.size() == 0) {
        dst = src;
        return;
    }
    if (dst.matrix.cols() != src.matrix.cols()) {
        throw FormatError("dataset: dim mismatch across split files");
    }
    Matrix merged(dst.size() + src.size(), dst.matrix.cols());
    for (std::size_t r = 0; r < dst.size(); ++r) {
        for (std::size_t d = 0; d < dst.matrix.cols(); ++d) {
            merged.at(r, d) = dst.matrix.at(r, d);
        }
    }
    for (std::size_t r = 0; r < src.size(); ++r) {
        for (std::size_t d = 0; d < src.matrix.cols(); ++d) {
            merged.at(dst.size() + r, d) = src.matrix.at(r, d);
        }
    }
    dst.matrix = std::move(merged);
    dst.entity_ids.insert(dst.entity_ids.end(), src.entity_ids.begin(), src.entity_ids.end());
}

}  // namespace

Dataset load_dataset(const std::string& manifest_or_dir) {
    fs::path manifest_path(manifest_or_dir);
    if (fs::is_directory(manifest_path)) manifest_path /= "manifest.json";
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path.string()));
    } catch (const json::parse_error& e) {
        throw FormatError("manifest: invalid JSON: " + std::string(e.what()));
    }
    if (!manifest.contains("splits")) throw FormatError("manifest: missing \"splits\"");
    const fs::path base = manifest_path.parent_path();

    Dataset ds;
    ds.x.modality = Modality::X;
    ds.y.modality = Modality::Y;
    std::set<std::uint64_t> seen;
    for (const char* name : {"train", "val", "test"}) {
        if (!manifest["splits"].contains(name)) {
            throw FormatError(std::string("manifest: missing split \"") + name + "\"");
        }
        const json& sp = manifest["splits"][name];
        const EmbeddingBlock bx =
            read_embedding_file((base / sp.at("x").get<std::string>()).string());
        const EmbeddingBlock by =
            read_embedding_file((base / sp.at("y").get<std::string>()).string());

        std::set<std::uint64_t> ids(bx.entity_ids.begin(), bx.entity_ids.end());
        for (std::uint64_t id : by.entity_ids) ids.insert(id);
        std::vector<std::uint64_t>& split = name == std::string("train") ? ds.train
                                            : name == std::string("val") ? ds.val
                                                                         : ds.test;
        for (std::uint64_t id : ids) {
            if (!seen.insert(id).second) {
                throw FormatError("dataset: entity " + std::to_string(id) +
                                  " appears in more than one split");
            }
            split.push_back(id);
        }
        append_block(ds.x, bx);
        append_block(ds.y, by);
    }
    return ds;
}

}  // namespace sma
