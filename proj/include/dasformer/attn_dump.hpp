// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "json.hpp"

#include "dasformer/model.hpp"

namespace dasformer {

/// Writes one dense-matrix text file per captured attention record
/// ("rows cols" header, then rows of decimals) plus an index.json manifest.
/// Returns the written file names.
template <typename T>
std::vector<std::string> write_attention_dump(const std::string& dir,
                                              const CaptureSink<T>& records) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  std::vector<std::string> files;

  for (const auto& rec : records) {
    std::ostringstream name;
    name << "layer" << rec.layer << "_" << attn_module_name(rec.module) << "_head" << rec.head
         << "_slice" << rec.slice << ".txt";
    const std::string fname = name.str();

    std::ofstream out(fs::path(dir) / fname, std::ios::trunc);
    if (!out) throw std::runtime_error("attention dump: cannot write " + fname);
    const std::size_t rows = rec.matrix.dim(0), cols = rec.matrix.dim(1);
    out << rows << " " << cols << "\n";
    out << std::setprecision(9);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out << (c ? " " : "") << double(rec.matrix.at(r, c));
      out << "\n";
    }
    if (!out) throw std::runtime_error("attention dump: write failed for " + fname);

    index.push_back({{"layer", rec.layer},
                     {"module", attn_module_name(rec.module)},
                     {"head", rec.head},
                     {"slice", rec.slice},
                     {"rows", rows},
                     {"cols", cols},
                     {"file", fname}});
    files.push_back(fname);
  }

  std::ofstream idx(fs::path(dir) / "index.json", std::ios::trunc);
  idx << index.dump(2) << "\n";
  if (!idx) throw std::runtime_error("attention dump: cannot write index.json");
  return files;
}

}  // namespace dasformer
