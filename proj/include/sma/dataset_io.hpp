#pragma once

#include <string>

#include "sma/data.hpp"

namespace sma {

// Writes one SMAE file per (split, modality) plus manifest.json into `dir`.
// Returns the manifest path.
std::string write_dataset_dir(const std::string& dir, const Dataset& ds);

// Loads a dataset from a manifest.json (or a directory containing one).
// Split entity sets must be disjoint.
Dataset load_dataset(const std::string& manifest_or_dir);

}  // namespace sma
