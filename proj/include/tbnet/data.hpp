#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tbnet/image.hpp"
#include "tbnet/tensor.hpp"

namespace tbnet {

constexpr int kCropSize = 224;

enum class Split { train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

/// Labeled, normalized image. Label 1 = Tuberculosis (positive class),
/// 0 = Normal.
struct Sample {
  ImageF image;
  int label = 0;
  std::string path;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetIndex {
  std::vector<Sample> samples;
  std::vector<Split> split;  // parallel to samples
  std::uint64_t seed = 0;
  int skipped = 0;  // undecodable files

  std::vector<std::size_t> indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (split[i] == s) out.push_back(i);
    }
    return out;
  }

  int count(Split s, int label) const {
    int n = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (split[i] == s && samples[i].label == label) ++n;
    }
    return n;
  }
};

/// Loads a class-per-directory corpus: <root>/Normal, <root>/Tuberculosis.
/// Files are sorted before splitting so the assignment is independent of
/// directory listing order. The split is stratified per class.
/// Undecodable files are skipped with a warning on stderr.
DatasetIndex load_corpus(const std::string& root, const SplitRatios& ratios,
                         std::uint64_t seed);

/// `path,label,split` rows, one per sample.
void export_manifest_csv(const DatasetIndex& index, const std::string& path);

ImageF hflip(const ImageF& img);

/// Column reversal with probability p; the decision consumes one draw
/// from the rng either way.
ImageF random_hflip(const ImageF& img, std::mt19937_64& rng, double p = 0.5);

/// Reflect-101 padding by arbitrary amounts (indices fold with period
/// 2*(n-1), so the pad may exceed the source dimension). Requires every
/// padded dimension to have size >= 2.
ImageF reflect_pad_to(const ImageF& img, Eigen::Index min_h,
                      Eigen::Index min_w);

/// Reflect-pads undersized inputs, then crops a target x target window
/// at a uniformly drawn origin.
ImageF random_crop(const ImageF& img, std::mt19937_64& rng,
                   int target = kCropSize);

/// Deterministic eval-time geometry: symmetric reflect pad then center
/// crop.
ImageF center_crop(const ImageF& img, int target = kCropSize);

/// One training/eval batch: x is (B, 1, target, target) in [0, 1],
/// labels is the matching B x 2 one-hot matrix.
struct Batch {
  Tensor x;
  Eigen::MatrixXf labels;
  std::vector<int> truths;
};

/// Train split is shuffled and augmented with an rng derived from
/// (seed, epoch, split); val/test batches are deterministic and
/// augmentation-free. The last partial batch is kept.
std::vector<Batch> make_batches(const DatasetIndex& index, Split split,
                                int batch_size, bool augment,
                                std::uint64_t seed, int epoch = 0,
                                int target = kCropSize);

/// Desk-scale synthetic corpus: class 1 images carry a bright Gaussian
/// blob at a random location over textured noise, class 0 are texture
/// only. Deterministic per seed.
DatasetIndex synth_blob_dataset(int n_per_class, int size, std::uint64_t seed,
                                const SplitRatios& ratios = SplitRatios{});

/// Converts one normalized image to a (1, 1, H, W) tensor.
Tensor image_to_tensor(const ImageF& img);

}  // namespace tbnet
