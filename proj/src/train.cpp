#include "chl/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "chl/error.hpp"

namespace chl {

namespace {

std::vector<int> shuffled_order(std::size_t n, RngEngine& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const int j = uniform_int(rng, 0, static_cast<int>(i) - 1);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// Batch-level pair sets: the partner view is always positive; other rows
// follow the labels, filtered through the relaxed dataset-level sets when
// those are provided (removed pairs land in neither set).
PairSets batch_pair_sets(const Eigen::VectorXi& labels, const Eigen::VectorXi& sources,
                         const PairSets* dataset_pairs) {
  const Eigen::Index n = labels.size();
  PairSets sets;
  sets.positives.resize(n);
  sets.negatives.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int u = sources(i);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const int v = sources(j);
      if (u == v) {
        sets.positives[i].push_back(static_cast<int>(j));
        continue;
      }
      if (labels(j) == labels(i)) {
        if (!dataset_pairs ||
            std::binary_search(dataset_pairs->positives[u].begin(), dataset_pairs->positives[u].end(), v))
          sets.positives[i].push_back(static_cast<int>(j));
      } else {
        if (!dataset_pairs ||
            std::binary_search(dataset_pairs->negatives[u].begin(), dataset_pairs->negatives[u].end(), v))
          sets.negatives[i].push_back(static_cast<int>(j));
      }
    }
  }
  return sets;
}

}  // namespace

void TrainDataset::validate() const {
  if (images.empty()) throw DataError("training dataset is empty");
  if (labels.size() != static_cast<Eigen::Index>(images.size()) || patient_ids.size() != images.size())
    throw DataError("training dataset field sizes disagree");
}

Checkpoint train_contrastive(const TrainDataset& data, const PairSets* dataset_pairs,
                             const AugmentPipeline& pipeline, const LossConfig& loss_cfg,
                             const TrainConfig& train_cfg, const EncoderConfig& enc_cfg,
                             const Checkpoint* init, StageTag out_stage, std::uint64_t parent_hash,
                             std::vector<EpochLogRow>* log) {
  data.validate();
  pipeline.validate();
  loss_cfg.validate();
  train_cfg.validate();
  enc_cfg.validate();
  if (dataset_pairs) dataset_pairs->validate(static_cast<Eigen::Index>(data.size()));

  const bool both_classes = [&] {
    bool has0 = false, has1 = false;
    for (Eigen::Index i = 0; i < data.labels.size(); ++i) (data.labels(i) == 0 ? has0 : has1) = true;
    return has0 && has1;
  }();
  if (!both_classes) throw DataError("contrastive training needs both classes present");

  EncoderParams params =
      init ? init->encoder_params() : EncoderParams::init(enc_cfg, train_cfg.rng_seed);
  if (init && (init->encoder_config.input_size != enc_cfg.input_size ||
               init->encoder_config.embed_dim != enc_cfg.embed_dim || init->encoder_config.channels != enc_cfg.channels))
    throw ConfigError("checkpoint encoder config does not match the run config");

  AdamState adam(params.tensors);
  const std::size_t m = data.size();
  const std::size_t batch_count = (m + train_cfg.batch_size - 1) / train_cfg.batch_size;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    RngEngine shuffle_rng = derive_rng(train_cfg.rng_seed, {0x53485546ull, static_cast<std::uint64_t>(epoch)});
    const std::vector<int> order = shuffled_order(m, shuffle_rng);

    double loss_sum = 0.0;
    int skipped = 0;
    for (std::size_t b = 0; b < batch_count; ++b) {
      const std::size_t begin = b * train_cfg.batch_size;
      const std::size_t end = std::min(begin + train_cfg.batch_size, m);
      const int n_img = static_cast<int>(end - begin);

      std::vector<ImageTensor> views;
      views.reserve(2 * n_img);
      Eigen::VectorXi labels(2 * n_img), sources(2 * n_img);
      std::vector<std::string> patients(2 * n_img);
      for (int s = 0; s < n_img; ++s) {
        const int u = order[begin + s];
        RngEngine view_rng = derive_rng(train_cfg.rng_seed,
                                        {0x41554744ull, static_cast<std::uint64_t>(epoch), b, static_cast<std::uint64_t>(s)});
        auto [a_view, b_view] = make_positive_pair(pipeline, data.images[u], view_rng);
        views.push_back(std::move(a_view));
        views.push_back(std::move(b_view));
        for (int t = 0; t < 2; ++t) {
          labels(2 * s + t) = data.labels(u);
          sources(2 * s + t) = u;
          patients[2 * s + t] = data.patient_ids[u];
        }
      }

      std::vector<const ImageTensor*> ptrs;
      ptrs.reserve(views.size());
      for (const auto& v : views) ptrs.push_back(&v);
      ForwardTrace trace;
      EmbeddingBatch batch;
      batch.z = forward_batch(params, ptrs, &trace);
      batch.labels = labels;
      batch.source_index = sources;
      batch.patient_ids = patients;

      const PairSets pairs = batch_pair_sets(labels, sources, dataset_pairs);
      const LossResult loss = combined_loss(batch, pairs, loss_cfg);
      if (!std::isfinite(loss.value) || !loss.grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " batch " << b << " (image ids:";
        for (int s = 0; s < n_img; ++s) msg << ' ' << order[begin + s];
        msg << ")";
        throw NumericError(msg.str());
      }

      const std::vector<Eigen::MatrixXd> grads = backward_batch(params, trace, loss.grad);
      adam.update(params.tensors, grads, train_cfg);
      if (!params.all_finite()) {
        std::ostringstream msg;
        msg << "non-finite parameters after epoch " << epoch << " batch " << b;
        throw NumericError(msg.str());
      }
      loss_sum += loss.value;
      skipped += loss.skipped_anchors;
    }
    if (log) log->push_back({epoch, loss_sum / static_cast<double>(batch_count), skipped});
  }

  Checkpoint out;
  out.stage = out_stage;
  out.epoch = static_cast<std::uint32_t>(train_cfg.epochs);
  out.rng_seed = train_cfg.rng_seed;
  out.parent_hash = parent_hash;
  out.encoder_config = enc_cfg;
  out.encoder_tensors = params.tensors;
  return out;
}

Eigen::MatrixXd embed_dataset(const EncoderParams& params, const std::vector<ImageTensor>& images) {
  if (images.empty()) throw DataError("cannot embed an empty dataset");
  const int d = params.config.embed_dim;
  Eigen::MatrixXd z(static_cast<Eigen::Index>(images.size()), d);
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, images.size());
    std::vector<const ImageTensor*> ptrs;
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&images[i]);
    z.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        forward_batch(params, ptrs, nullptr);
  }
  return z;
}

}  // namespace chl
