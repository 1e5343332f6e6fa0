#include "ocl/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ocl {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "query") return Split::Query;
  if (s == "gallery") return Split::Gallery;
  throw IoError("unknown split '" + s + "' in dataset CSV");
}

std::vector<int> Dataset::indices_of(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

std::vector<int> Dataset::distinct_ids(Split s) const {
  std::set<int> seen;
  for (int i = 0; i < size(); ++i)
    if (splits[i] == s) seen.insert(ids[i]);
  return std::vector<int>(seen.begin(), seen.end());
}

void SyntheticSpec::validate() const {
  std::vector<std::string> errs;
  if (num_classes < 2) errs.push_back("num_classes must be >= 2");
  if (samples_per_class < 3)
    errs.push_back("samples_per_class must be >= 3 (train+query+gallery)");
  if (dim < 1) errs.push_back("dim must be >= 1");
  if (!(cluster_spread >= 0.0)) errs.push_back("cluster_spread must be >= 0");
  if (!(separation >= 0.0)) errs.push_back("separation must be >= 0");
  if (!(train_frac > 0.0 && train_frac < 1.0))
    errs.push_back("train_frac must lie in (0, 1)");
  if (!(query_frac > 0.0 && query_frac < 1.0))
    errs.push_back("query_frac must lie in (0, 1)");
  if (train_frac + query_frac >= 1.0)
    errs.push_back("train_frac + query_frac must be < 1 (gallery is the rest)");
  if (!errs.empty()) {
    std::string msg = "invalid synthetic spec:";
    for (const std::string& e : errs) msg += "\n  - " + e;
    throw InvalidConfig(msg);
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const int n = spec.samples_per_class;
  int n_query = std::max(1, static_cast<int>(std::llround(spec.query_frac * n)));
  int n_gallery = std::max(
      1, static_cast<int>(
             std::llround((1.0 - spec.train_frac - spec.query_frac) * n)));
  int n_train = n - n_query - n_gallery;
  if (n_train < 1)
    throw InvalidConfig("synthetic spec leaves no training samples per class");

  Dataset ds;
  ds.dim = spec.dim;
  ds.features = Matrix(spec.num_classes * n, spec.dim);

  int row = 0;
  for (int cls = 0; cls < spec.num_classes; ++cls) {
    VecD center(spec.dim);
    for (int k = 0; k < spec.dim; ++k)
      center[k] = spec.separation * rng.normal();
    for (int s = 0; s < n; ++s) {
      for (int k = 0; k < spec.dim; ++k)
        ds.features(row, k) = center[k] + spec.cluster_spread * rng.normal();
      ds.ids.push_back(cls);
      ds.cameras.push_back(-1);
      ds.splits.push_back(s < n_train ? Split::Train
                          : s < n_train + n_query ? Split::Query
                                                  : Split::Gallery);
      ++row;
    }
  }
  return ds;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir);

  const std::string csv_path = (fs::path(dir) / "data.csv").string();
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + csv_path);

  out << "id,camera,split";
  for (int k = 0; k < ds.dim; ++k) out << ",f_" << k;
  out << "\n";
  for (int i = 0; i < ds.size(); ++i) {
    out << ds.ids[i] << ',' << ds.cameras[i] << ',' << to_string(ds.splits[i]);
    for (int k = 0; k < ds.dim; ++k)
      out << ',' << format_double(ds.features(i, k));
    out << "\n";
  }
  out.close();
  if (!out) throw IoError("write failed for " + csv_path);

  json manifest;
  manifest["kind"] = ds.image ? "image" : "vector";
  manifest["dim"] = ds.dim;
  manifest["rows"] = ds.size();
  if (ds.image) {
    manifest["channels"] = ds.channels;
    manifest["height"] = ds.height;
    manifest["width"] = ds.width;
  }
  const std::string man_path = (fs::path(dir) / "manifest.json").string();
  std::ofstream man(man_path, std::ios::binary);
  if (!man) throw IoError("cannot write " + man_path);
  man << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::string& dir) {
  const std::string man_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream man(man_path);
  if (!man) throw IoError("missing dataset manifest " + man_path);
  json manifest;
  try {
    man >> manifest;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + man_path + ": " + e.what());
  }

  Dataset ds;
  ds.dim = manifest.at("dim").get<int>();
  if (manifest.at("kind").get<std::string>() == "image") {
    ds.image = true;
    ds.channels = manifest.at("channels").get<int>();
    ds.height = manifest.at("height").get<int>();
    ds.width = manifest.at("width").get<int>();
    if (ds.channels * ds.height * ds.width != ds.dim)
      throw IoError("manifest image shape does not match dim");
  }

  const std::string csv_path = (fs::path(dir) / "data.csv").string();
  std::ifstream in(csv_path);
  if (!in) throw IoError("missing dataset file " + csv_path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file " + csv_path);

  std::vector<VecD> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    ds.ids.push_back(std::stoi(cell));
    std::getline(ss, cell, ',');
    ds.cameras.push_back(std::stoi(cell));
    std::getline(ss, cell, ',');
    ds.splits.push_back(split_from_string(cell));
    VecD feat;
    feat.reserve(ds.dim);
    while (std::getline(ss, cell, ',')) feat.push_back(std::stod(cell));
    if (static_cast<int>(feat.size()) != ds.dim)
      throw IoError("row " + std::to_string(rows.size()) + " has " +
                    std::to_string(feat.size()) + " features, expected " +
                    std::to_string(ds.dim));
    rows.push_back(std::move(feat));
  }

  ds.features = Matrix(static_cast<int>(rows.size()), ds.dim);
  for (size_t i = 0; i < rows.size(); ++i)
    for (int k = 0; k < ds.dim; ++k)
      ds.features(static_cast<int>(i), k) = rows[i][k];
  if (!ds.features.finite()) throw IoError("dataset has non-finite features");
  return ds;
}

}  // namespace ocl
