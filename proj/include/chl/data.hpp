#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chl/image.hpp"
#include "chl/train.hpp"

namespace chl {

constexpr int kBenign = 0;
constexpr int kMalignant = 1;

std::string label_name(int label);
int parse_label(const std::string& name);  // case-insensitive benign/malignant

struct ManifestRecord {
  std::string path;          // resolved against the manifest location
  std::string relative_path;  // as written in the file
  int label = kBenign;
  std::string patient_id;
  std::string magnification = "NA";  // 40X, 100X, 200X, 400X or NA
  int fold = -1;                     // -1 when the optional column is absent
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::size_t size() const { return records.size(); }
  std::vector<std::string> unique_patients() const;  // order of first appearance
};

// CSV with header path,label,patient_id,magnification,fold (fold optional).
// Errors name the offending row number.
DatasetManifest load_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& manifest);

// Keeps records whose magnification matches; "ALL" keeps everything.
DatasetManifest filter_magnification(const DatasetManifest& manifest, const std::string& magnification);

struct FoldSplit {
  std::vector<std::string> train_patients, val_patients, test_patients;
  std::vector<int> train_indices, val_indices, test_indices;  // manifest row indices
};

// Patient-disjoint splits: patients are shuffled per fold (independent
// seeded resamplings) and partitioned by the ratios, rounded to whole
// patients; images follow their patient.
std::vector<FoldSplit> split_folds(const DatasetManifest& manifest, int n_folds,
                                   std::array<double, 3> ratios, std::uint64_t seed);

struct SyntheticDataset {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  std::vector<std::string> patient_ids;
};

// Two-class H&E-look fixture rendered through the reference stain basis:
// benign images carry a few large round hematoxylin blobs, malignant ones
// many small oriented blobs, over a shared smooth eosin background.
// Patients group every 4 consecutive images of a class.
SyntheticDataset generate_synthetic_dataset(int n_per_class, int image_size, std::uint64_t seed);

// Writes PNGs plus manifest.csv under dir; returns the manifest path.
std::string write_synthetic_dataset(const std::string& dir, const SyntheticDataset& dataset);

// Decodes manifest rows into a training split, resized to input_size.
TrainDataset load_split(const DatasetManifest& manifest, const std::vector<int>& indices, int input_size);

}  // namespace chl
