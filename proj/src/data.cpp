#include "chl/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "chl/error.hpp"
#include "chl/png_io.hpp"
#include "chl/rng.hpp"
#include "chl/stain.hpp"

namespace fs = std::filesystem;

namespace chl {

namespace {

std::string to_upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

const std::set<std::string> kMagnifications = {"40X", "100X", "200X", "400X", "NA"};

}  // namespace

std::string label_name(int label) { return label == kMalignant ? "malignant" : "benign"; }

int parse_label(const std::string& name) {
  const std::string lower = to_lower(name);
  if (lower == "benign") return kBenign;
  if (lower == "malignant") return kMalignant;
  throw DataError("invalid label: " + name);
}

std::vector<std::string> DatasetManifest::unique_patients() const {
  std::vector<std::string> patients;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.patient_id).second) patients.push_back(r.patient_id);
  return patients;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();

  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest is empty: " + path);
  const std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> expected = {"path", "label", "patient_id", "magnification", "fold"};
  const bool has_fold = header.size() == 5;
  if (header.size() < 4 || header.size() > 5)
    throw DataError("manifest header must be path,label,patient_id,magnification[,fold]");
  for (std::size_t i = 0; i < header.size(); ++i)
    if (to_lower(header[i]) != expected[i])
      throw DataError("manifest header must be path,label,patient_id,magnification[,fold]");

  DatasetManifest manifest;
  std::set<std::string> seen_paths;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("manifest row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    ManifestRecord rec;
    rec.relative_path = fields[0];
    const fs::path p = fs::path(fields[0]).is_absolute() ? fs::path(fields[0]) : base / fields[0];
    rec.path = p.string();
    if (!fs::exists(p)) throw DataError("manifest row " + std::to_string(row) + ": file not found: " + rec.path);
    if (!seen_paths.insert(rec.path).second)
      throw DataError("manifest row " + std::to_string(row) + ": duplicate path: " + rec.path);
    try {
      rec.label = parse_label(fields[1]);
    } catch (const DataError&) {
      throw DataError("manifest row " + std::to_string(row) + ": invalid label: " + fields[1]);
    }
    rec.patient_id = fields[2];
    if (rec.patient_id.empty()) throw DataError("manifest row " + std::to_string(row) + ": empty patient id");
    rec.magnification = to_upper(fields[3]);
    if (kMagnifications.find(rec.magnification) == kMagnifications.end())
      throw DataError("manifest row " + std::to_string(row) + ": invalid magnification: " + fields[3]);
    if (has_fold && !fields[4].empty()) {
      rec.fold = std::stoi(fields[4]);
      if (rec.fold < 0 || rec.fold > 4)
        throw DataError("manifest row " + std::to_string(row) + ": fold must be in 0..4");
    }
    manifest.records.push_back(std::move(rec));
  }
  if (manifest.records.empty()) throw DataError("manifest has no rows: " + path);
  return manifest;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  const bool has_fold = std::any_of(manifest.records.begin(), manifest.records.end(),
                                    [](const ManifestRecord& r) { return r.fold >= 0; });
  out << "path,label,patient_id,magnification" << (has_fold ? ",fold" : "") << "\n";
  for (const auto& r : manifest.records) {
    out << (r.relative_path.empty() ? r.path : r.relative_path) << ',' << label_name(r.label) << ','
        << r.patient_id << ',' << r.magnification;
    if (has_fold) out << ',' << (r.fold >= 0 ? std::to_string(r.fold) : "");
    out << "\n";
  }
  if (!out) throw DataError("failed writing manifest: " + path);
}

DatasetManifest filter_magnification(const DatasetManifest& manifest, const std::string& magnification) {
  const std::string mag = to_upper(magnification);
  if (mag == "ALL") return manifest;
  if (kMagnifications.find(mag) == kMagnifications.end())
    throw ConfigError("invalid magnification filter: " + magnification);
  DatasetManifest out;
  for (const auto& r : manifest.records)
    if (r.magnification == mag) out.records.push_back(r);
  if (out.records.empty()) throw DataError("no manifest rows with magnification " + mag);
  return out;
}

std::vector<FoldSplit> split_folds(const DatasetManifest& manifest, int n_folds,
                                   std::array<double, 3> ratios, std::uint64_t seed) {
  if (n_folds < 1) throw ConfigError("n_folds must be >= 1");
  if (ratios[0] <= 0.0 || ratios[1] <= 0.0 || ratios[2] <= 0.0 ||
      std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw ConfigError("split ratios must be positive and sum to 1");
  const std::vector<std::string> patients = manifest.unique_patients();
  const int p = static_cast<int>(patients.size());
  if (p < n_folds) throw DataError("fewer patients than folds");

  std::vector<FoldSplit> folds;
  for (int f = 0; f < n_folds; ++f) {
    std::vector<int> order(p);
    std::iota(order.begin(), order.end(), 0);
    RngEngine rng = derive_rng(seed, {0x464f4c44ull, static_cast<std::uint64_t>(f)});
    for (int i = p; i > 1; --i) {
      const int j = uniform_int(rng, 0, i - 1);
      std::swap(order[i - 1], order[j]);
    }
    int n_train = static_cast<int>(std::lround(ratios[0] * p));
    int n_val = static_cast<int>(std::lround(ratios[1] * p));
    n_train = std::max(1, std::min(n_train, p - 2));
    n_val = std::max(1, std::min(n_val, p - n_train - 1));

    FoldSplit split;
    for (int i = 0; i < p; ++i) {
      const std::string& patient = patients[order[i]];
      if (i < n_train)
        split.train_patients.push_back(patient);
      else if (i < n_train + n_val)
        split.val_patients.push_back(patient);
      else
        split.test_patients.push_back(patient);
    }
    auto contains = [](const std::vector<std::string>& v, const std::string& s) {
      return std::find(v.begin(), v.end(), s) != v.end();
    };
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      const std::string& patient = manifest.records[i].patient_id;
      if (contains(split.train_patients, patient))
        split.train_indices.push_back(static_cast<int>(i));
      else if (contains(split.val_patients, patient))
        split.val_indices.push_back(static_cast<int>(i));
      else
        split.test_indices.push_back(static_cast<int>(i));
    }
    folds.push_back(std::move(split));
  }
  return folds;
}

SyntheticDataset generate_synthetic_dataset(int n_per_class, int image_size, std::uint64_t seed) {
  if (n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  const Eigen::Matrix<double, 3, 2> basis = reference_stain_basis();
  const double unit = image_size / 32.0;  // blob geometry scales with resolution

  SyntheticDataset out;
  for (int label = 0; label < 2; ++label) {
    for (int i = 0; i < n_per_class; ++i) {
      const int patient = i / 4;
      RngEngine patient_rng = derive_rng(seed, {0x50415449ull, static_cast<std::uint64_t>(label),
                                                static_cast<std::uint64_t>(patient)});
      const int patient_bias = uniform_int(patient_rng, label == kBenign ? -1 : -2, label == kBenign ? 1 : 2);
      RngEngine rng = derive_rng(seed, {0x53594e54ull, static_cast<std::uint64_t>(label),
                                        static_cast<std::uint64_t>(i)});

      const Eigen::Index n = static_cast<Eigen::Index>(image_size) * image_size;
      Eigen::ArrayXd hema = Eigen::ArrayXd::Zero(n);
      Eigen::ArrayXd eosin = Eigen::ArrayXd::Constant(n, uniform_real(rng, 0.25, 0.4));

      // shared smooth eosin texture
      const int n_bg = 3;
      for (int b = 0; b < n_bg; ++b) {
        const double cx = uniform_real(rng, 0.0, image_size - 1.0);
        const double cy = uniform_real(rng, 0.0, image_size - 1.0);
        const double sigma = uniform_real(rng, 6.0, 12.0) * unit;
        const double amp = uniform_real(rng, 0.1, 0.25);
        for (int y = 0; y < image_size; ++y)
          for (int x = 0; x < image_size; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            eosin(static_cast<Eigen::Index>(y) * image_size + x) += amp * std::exp(-0.5 * d2 / (sigma * sigma));
          }
      }

      // class-dependent nuclear blobs: few large round vs many small oriented,
      // with clearly separated total hematoxylin mass between the classes
      const int blobs = label == kBenign ? uniform_int(rng, 2, 4) + patient_bias
                                         : uniform_int(rng, 18, 26) + patient_bias;
      for (int b = 0; b < std::max(1, blobs); ++b) {
        const double cx = uniform_real(rng, 2.0, image_size - 3.0);
        const double cy = uniform_real(rng, 2.0, image_size - 3.0);
        double sa, sb, theta, amp;
        if (label == kBenign) {
          sa = sb = uniform_real(rng, 2.5, 3.5) * unit;
          theta = 0.0;
          amp = uniform_real(rng, 0.6, 0.9);
        } else {
          sa = uniform_real(rng, 1.6, 2.4) * unit;
          sb = sa * uniform_real(rng, 0.3, 0.5);
          theta = uniform_real(rng, 0.0, 3.14159265358979323846);
          amp = uniform_real(rng, 1.0, 1.4);
        }
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int y = 0; y < image_size; ++y)
          for (int x = 0; x < image_size; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double u = ct * dx + st * dy;
            const double v = -st * dx + ct * dy;
            const double e = 0.5 * (u * u / (sa * sa) + v * v / (sb * sb));
            if (e < 12.0) hema(static_cast<Eigen::Index>(y) * image_size + x) += amp * std::exp(-e);
          }
      }

      OpticalDensity od;
      od.height = image_size;
      od.width = image_size;
      Eigen::Matrix2Xd concentrations(2, n);
      concentrations.row(0) = hema.transpose();
      concentrations.row(1) = eosin.transpose();
      od.values = basis * concentrations;
      out.images.push_back(od_to_rgb(od));
      out.labels.push_back(label);
      char pid[32];
      std::snprintf(pid, sizeof(pid), "syn%c-%04d", label == kBenign ? 'B' : 'M', patient);
      out.patient_ids.push_back(pid);
    }
  }
  return out;
}

std::string write_synthetic_dataset(const std::string& dir, const SyntheticDataset& dataset) {
  fs::create_directories(dir);
  DatasetManifest manifest;
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "img_%05zu_%s.png", i, label_name(dataset.labels[i]).c_str());
    const fs::path file = fs::path(dir) / name;
    write_png(file.string(), dataset.images[i]);
    ManifestRecord rec;
    rec.path = file.string();
    rec.relative_path = name;
    rec.label = dataset.labels[i];
    rec.patient_id = dataset.patient_ids[i];
    rec.magnification = "NA";
    manifest.records.push_back(std::move(rec));
  }
  const std::string manifest_path = (fs::path(dir) / "manifest.csv").string();
  write_manifest(manifest_path, manifest);
  return manifest_path;
}

TrainDataset load_split(const DatasetManifest& manifest, const std::vector<int>& indices, int input_size) {
  TrainDataset out;
  out.labels.resize(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const ManifestRecord& rec = manifest.records.at(static_cast<std::size_t>(indices[k]));
    out.images.push_back(resize_bilinear(read_png(rec.path), input_size, input_size));
    out.labels(static_cast<Eigen::Index>(k)) = rec.label;
    out.patient_ids.push_back(rec.patient_id);
  }
  return out;
}

}  // namespace chl
