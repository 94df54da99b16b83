#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sma/dataset_io.hpp"

using namespace sma;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("sma_dsio_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("dataset round trips through split files and manifest") {
    SynthConfig cfg;
    cfg.num_entities = 20;
    cfg.views_x = 2;
    cfg.views_y = 3;
    cfg.latent_dim = 4;
    cfg.dim_x = 8;
    cfg.dim_y = 6;
    cfg.seed = 99;
    Dataset ds = generate(cfg);

    const fs::path dir = scratch_dir("roundtrip");
    const std::string manifest = write_dataset_dir(dir.string(), ds);
    CHECK(fs::exists(manifest));

    Dataset loaded = load_dataset(dir.string());
    CHECK(loaded.train == ds.train);
    CHECK(loaded.val == ds.val);
    CHECK(loaded.test == ds.test);
    CHECK(loaded.x.matrix.cols() == ds.x.matrix.cols());
    CHECK(loaded.x.size() == ds.x.size());
    CHECK(loaded.y.size() == ds.y.size());

    // Row content survives (order may differ from the in-memory dataset, so
    // compare per-entity sets through a gather).
    for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
        EmbeddingBlock a = gather_entities(ds.x, *split);
        EmbeddingBlock b = gather_entities(loaded.x, *split);
        CHECK(a.matrix == b.matrix);
        CHECK(a.entity_ids == b.entity_ids);
    }
}

TEST_CASE("load_dataset rejects overlapping splits") {
    SynthConfig cfg;
    cfg.num_entities = 10;
    cfg.seed = 3;
    Dataset ds = generate(cfg);
    const fs::path dir = scratch_dir("overlap");
    write_dataset_dir(dir.string(), ds);

    // Duplicate the train files over the val files: entities now collide.
    fs::copy_file(dir / "train_x.smae", dir / "val_x.smae",
                  fs::copy_options::overwrite_existing);
    fs::copy_file(dir / "train_y.smae", dir / "val_y.smae",
                  fs::copy_options::overwrite_existing);
    CHECK_THROWS_AS(load_dataset(dir.string()), FormatError);
}

TEST_CASE("load_dataset rejects a missing split and invalid manifest") {
    const fs::path dir = scratch_dir("badmanifest");
    std::ofstream(dir / "manifest.json") << R"({"splits": {"val": {"x": "a", "y": "b"}}})";
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("train"), FormatError);

    std::ofstream(dir / "manifest.json") << "{broken";
    CHECK_THROWS_AS(load_dataset(dir.string()), FormatError);
}
