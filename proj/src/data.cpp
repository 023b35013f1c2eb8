#include "tbnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tbnet/errors.hpp"

namespace fs = std::filesystem;

namespace tbnet {

namespace {

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t epoch,
                            std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

void assign_split(DatasetIndex& index, const SplitRatios& ratios,
                  std::uint64_t seed) {
  index.split.assign(index.samples.size(), Split::train);
  for (int label = 0; label <= 1; ++label) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < index.samples.size(); ++i) {
      if (index.samples[i].label == label) idx.push_back(i);
    }
    auto rng = derived_rng(seed, 0, 100 + static_cast<std::uint64_t>(label));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<long>(idx.size());
    const long n_train = std::lround(ratios.train * static_cast<double>(n));
    const long n_val = std::lround(ratios.val * static_cast<double>(n));
    for (long i = 0; i < n; ++i) {
      index.split[idx[static_cast<std::size_t>(i)]] =
          i < n_train ? Split::train
                      : (i < n_train + n_val ? Split::val : Split::test);
    }
  }
}

}  // namespace

DatasetIndex load_corpus(const std::string& root, const SplitRatios& ratios,
                         std::uint64_t seed) {
  DatasetIndex index;
  index.seed = seed;
  const std::pair<const char*, int> classes[] = {{"Normal", 0},
                                                 {"Tuberculosis", 1}};
  for (const auto& [dir, label] : classes) {
    const fs::path cls = fs::path(root) / dir;
    if (!fs::is_directory(cls)) {
      throw DataError("missing class directory: " + cls.string());
    }
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(cls)) {
      if (e.is_regular_file()) files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    int loaded = 0;
    for (const auto& f : files) {
      try {
        Sample s;
        s.image = normalize(decode_image(f));
        s.label = label;
        s.path = f;
        index.samples.push_back(std::move(s));
        ++loaded;
      } catch (const DataError& e) {
        std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
        ++index.skipped;
      }
    }
    if (loaded == 0) {
      throw DataError("no decodable images in " + cls.string());
    }
  }
  assign_split(index, ratios, seed);
  return index;
}

void export_manifest_csv(const DatasetIndex& index, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "path,label,split\n";
  for (std::size_t i = 0; i < index.samples.size(); ++i) {
    out << index.samples[i].path << "," << index.samples[i].label << ","
        << split_name(index.split[i]) << "\n";
  }
}

ImageF hflip(const ImageF& img) { return img.rowwise().reverse(); }

ImageF random_hflip(const ImageF& img, std::mt19937_64& rng, double p) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng) < p ? hflip(img) : img;
}

namespace {

// reflect-101 index fold, period 2*(n-1)
Eigen::Index fold_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;  // unpadded degenerate dimension
  const Eigen::Index period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace

ImageF reflect_pad_to(const ImageF& img, Eigen::Index min_h,
                      Eigen::Index min_w) {
  if (img.rows() >= min_h && img.cols() >= min_w) return img;
  if ((img.rows() < min_h && img.rows() < 2) ||
      (img.cols() < min_w && img.cols() < 2)) {
    throw DataError("reflect padding requires dimension >= 2");
  }
  const Eigen::Index out_h = std::max(img.rows(), min_h);
  const Eigen::Index out_w = std::max(img.cols(), min_w);
  const Eigen::Index top = (out_h - img.rows()) / 2;
  const Eigen::Index left = (out_w - img.cols()) / 2;
  ImageF out(out_h, out_w);
  for (Eigen::Index i = 0; i < out_h; ++i) {
    const Eigen::Index si = fold_index(i - top, img.rows());
    for (Eigen::Index j = 0; j < out_w; ++j) {
      out(i, j) = img(si, fold_index(j - left, img.cols()));
    }
  }
  return out;
}

ImageF random_crop(const ImageF& img, std::mt19937_64& rng, int target) {
  if (img.rows() < 1 || img.cols() < 1) throw DataError("empty image");
  const ImageF padded = reflect_pad_to(img, target, target);
  std::uniform_int_distribution<Eigen::Index> row_d(0, padded.rows() - target);
  std::uniform_int_distribution<Eigen::Index> col_d(0, padded.cols() - target);
  const Eigen::Index r = row_d(rng);
  const Eigen::Index c = col_d(rng);
  return padded.block(r, c, target, target);
}

ImageF center_crop(const ImageF& img, int target) {
  const ImageF padded = reflect_pad_to(img, target, target);
  const Eigen::Index r = (padded.rows() - target) / 2;
  const Eigen::Index c = (padded.cols() - target) / 2;
  return padded.block(r, c, target, target);
}

Tensor image_to_tensor(const ImageF& img) {
  Tensor t(1, 1, img.rows(), img.cols());
  t.plane(0, 0) = img;
  return t;
}

std::vector<Batch> make_batches(const DatasetIndex& index, Split split,
                                int batch_size, bool augment,
                                std::uint64_t seed, int epoch, int target) {
  if (batch_size < 1) {
    throw std::invalid_argument("make_batches: batch size must be >= 1");
  }
  std::vector<std::size_t> order = index.indices_of(split);
  if (order.empty()) {
    throw DataError(std::string("make_batches: empty split ") +
                    split_name(split));
  }
  auto rng = derived_rng(seed, static_cast<std::uint64_t>(epoch),
                         static_cast<std::uint64_t>(split));
  if (split == Split::train) {
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    const Eigen::Index b = static_cast<Eigen::Index>(end - start);
    Batch batch;
    batch.x = Tensor(b, 1, target, target);
    batch.labels.setZero(b, 2);
    for (Eigen::Index k = 0; k < b; ++k) {
      const Sample& s = index.samples[order[start + k]];
      ImageF img = augment ? random_hflip(random_crop(s.image, rng, target), rng)
                           : center_crop(s.image, target);
      batch.x.plane(k, 0) = img;
      batch.labels(k, s.label) = 1.0f;
      batch.truths.push_back(s.label);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

DatasetIndex synth_blob_dataset(int n_per_class, int size, std::uint64_t seed,
                                const SplitRatios& ratios) {
  if (n_per_class < 1) {
    throw std::invalid_argument("synth_blob_dataset: n must be >= 1");
  }
  DatasetIndex index;
  index.seed = seed;
  auto rng = derived_rng(seed, 0, 7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int label = 0; label <= 1; ++label) {
    for (int k = 0; k < n_per_class; ++k) {
      ImageF img(size, size);
      // low-frequency texture over uniform noise
      const double fx = 1.0 + 3.0 * unif(rng);
      const double fy = 1.0 + 3.0 * unif(rng);
      const double phase = 2.0 * M_PI * unif(rng);
      for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
          const double tex =
              0.08 * std::sin(2.0 * M_PI * (fx * i + fy * j) / size + phase);
          img(i, j) = static_cast<float>(0.25 + tex + 0.12 * unif(rng));
        }
      }
      if (label == 1) {
        const double cy = size * (0.2 + 0.6 * unif(rng));
        const double cx = size * (0.2 + 0.6 * unif(rng));
        const double sigma = size / 10.0;
        for (int i = 0; i < size; ++i) {
          for (int j = 0; j < size; ++j) {
            const double d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
            img(i, j) += static_cast<float>(
                0.55 * std::exp(-d2 / (2.0 * sigma * sigma)));
          }
        }
      }
      img = img.cwiseMax(0.0f).cwiseMin(1.0f);
      Sample s;
      s.image = std::move(img);
      s.label = label;
      s.path = std::string("synth/") + (label ? "blob" : "noise") + "_" +
               std::to_string(k);
      index.samples.push_back(std::move(s));
    }
  }
  assign_split(index, ratios, seed);
  return index;
}

}  // namespace tbnet
