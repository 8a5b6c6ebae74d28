#include "chl/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "chl/error.hpp"
#include "chl/stain.hpp"

namespace chl {

namespace {

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, bool train_mode, RngEngine& rng) {
  if (!train_mode || p <= 0.0) return Eigen::MatrixXd::Ones(rows, cols);
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 - p;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = bernoulli(rng, keep) ? 1.0 / keep : 0.0;
  return mask;
}

std::vector<int> shuffled_order(std::size_t n, RngEngine& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const int j = uniform_int(rng, 0, static_cast<int>(i) - 1);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

void FinetuneConfig::validate() const {
  if (eta < 0.0) throw ConfigError("eta must be non-negative");
  if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0, 1)");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (hidden1 < 1 || hidden2 < 1) throw ConfigError("classifier hidden widths must be positive");
}

HeadParams HeadParams::init(int embed_dim, int hidden1, int hidden2, std::uint64_t seed) {
  RngEngine rng = derive_rng(seed, {0x48454144ull});  // "HEAD"
  auto fan_in_matrix = [&rng](int rows, int cols) {
    const double bound = std::sqrt(1.0 / cols);
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = uniform_real(rng, -bound, bound);
    return w;
  };
  HeadParams heads;
  heads.tensors.push_back(fan_in_matrix(hidden1, embed_dim));
  heads.tensors.push_back(Eigen::MatrixXd::Zero(hidden1, 1));
  heads.tensors.push_back(fan_in_matrix(hidden2, hidden1));
  heads.tensors.push_back(Eigen::MatrixXd::Zero(hidden2, 1));
  heads.tensors.push_back(fan_in_matrix(2, hidden2));
  heads.tensors.push_back(Eigen::MatrixXd::Zero(2, 1));
  heads.tensors.push_back(fan_in_matrix(6, embed_dim));
  heads.tensors.push_back(Eigen::MatrixXd::Zero(6, 1));
  return heads;
}

HeadParams HeadParams::from_tensors(std::vector<Eigen::MatrixXd> tensors) {
  if (tensors.size() != 8) throw DataError("head checkpoint must hold 8 tensors");
  HeadParams heads;
  heads.tensors = std::move(tensors);
  if (heads.w3().rows() != 2 || heads.aux_w().rows() != 6 || heads.w2().cols() != heads.w1().rows() ||
      heads.w3().cols() != heads.w2().rows() || heads.aux_w().cols() != heads.w1().cols())
    throw DataError("head tensor shapes are inconsistent");
  return heads;
}

HeadTrace head_forward(const HeadParams& heads, const Eigen::MatrixXd& embeddings, bool train_mode,
                       double dropout_p, RngEngine& rng) {
  HeadTrace t;
  t.input = embeddings;
  const Eigen::Index b = embeddings.rows();
  t.act1 = ((embeddings * heads.w1().transpose()).rowwise() + heads.b1().col(0).transpose()).array().tanh().matrix();
  t.mask1 = dropout_mask(b, t.act1.cols(), dropout_p, train_mode, rng);
  const Eigen::MatrixXd h1 = t.act1.cwiseProduct(t.mask1);
  t.act2 = ((h1 * heads.w2().transpose()).rowwise() + heads.b2().col(0).transpose()).array().tanh().matrix();
  t.mask2 = dropout_mask(b, t.act2.cols(), dropout_p, train_mode, rng);
  const Eigen::MatrixXd h2 = t.act2.cwiseProduct(t.mask2);
  t.logits = (h2 * heads.w3().transpose()).rowwise() + heads.b3().col(0).transpose();
  t.aux = (embeddings * heads.aux_w().transpose()).rowwise() + heads.aux_b().col(0).transpose();
  return t;
}

HeadBackward head_backward(const HeadParams& heads, const HeadTrace& trace, const Eigen::MatrixXd& d_logits,
                           const Eigen::MatrixXd& d_aux) {
  HeadBackward out;
  out.grads.reserve(8);
  for (const auto& t : heads.tensors) out.grads.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  out.d_embeddings = Eigen::MatrixXd::Zero(trace.input.rows(), trace.input.cols());

  if (d_logits.size() > 0) {
    const Eigen::MatrixXd h1 = trace.act1.cwiseProduct(trace.mask1);
    const Eigen::MatrixXd h2 = trace.act2.cwiseProduct(trace.mask2);
    out.grads[4] = d_logits.transpose() * h2;                      // w3
    out.grads[5] = d_logits.colwise().sum().transpose();           // b3
    Eigen::MatrixXd dh2 = d_logits * heads.w3();
    Eigen::MatrixXd da2 = dh2.cwiseProduct(trace.mask2);
    da2.array() *= (1.0 - trace.act2.array().square());
    out.grads[2] = da2.transpose() * h1;                           // w2
    out.grads[3] = da2.colwise().sum().transpose();                // b2
    Eigen::MatrixXd dh1 = da2 * heads.w2();
    Eigen::MatrixXd da1 = dh1.cwiseProduct(trace.mask1);
    da1.array() *= (1.0 - trace.act1.array().square());
    out.grads[0] = da1.transpose() * trace.input;                  // w1
    out.grads[1] = da1.colwise().sum().transpose();                // b1
    out.d_embeddings += da1 * heads.w1();
  }
  if (d_aux.size() > 0) {
    out.grads[6] = d_aux.transpose() * trace.input;                // aux_w
    out.grads[7] = d_aux.colwise().sum().transpose();              // aux_b
    out.d_embeddings += d_aux * heads.aux_w();
  }
  return out;
}

ScalarWithGrad classification_loss(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                                   const Eigen::Vector2d& class_weights) {
  if (logits.cols() != 2) throw DataError("classification logits must have 2 columns");
  if (labels.size() != logits.rows()) throw DataError("labels do not match logits");
  const Eigen::Index b = logits.rows();
  ScalarWithGrad out;
  out.grad = Eigen::MatrixXd::Zero(b, 2);
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels(i);
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    const double w = class_weights(y);
    const double m = std::max(logits(i, 0), logits(i, 1));
    const double lse = m + std::log(std::exp(logits(i, 0) - m) + std::exp(logits(i, 1) - m));
    out.value += w * (lse - logits(i, y));
    for (int c = 0; c < 2; ++c) {
      const double softmax = std::exp(logits(i, c) - lse);
      out.grad(i, c) = w * (softmax - (c == y ? 1.0 : 0.0));
    }
  }
  out.value /= static_cast<double>(b);
  out.grad /= static_cast<double>(b);
  return out;
}

ScalarWithGrad auxiliary_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& reference) {
  if (predicted.rows() != reference.rows() || predicted.cols() != reference.cols())
    throw DataError("auxiliary prediction and reference shapes disagree");
  const double b = static_cast<double>(predicted.rows());
  ScalarWithGrad out;
  out.value = (predicted - reference).squaredNorm() / b;
  out.grad = 2.0 * (predicted - reference) / b;
  return out;
}

TotalFinetuneLoss total_finetune_loss(double classification, double auxiliary, double eta, AuxSignMode mode) {
  if (eta < 0.0) throw ConfigError("eta must be non-negative");
  TotalFinetuneLoss out;
  out.value = classification - eta * auxiliary;
  out.cl_scale = 1.0;
  out.aux_encoder_scale = -eta;
  out.aux_head_scale = mode == AuxSignMode::kReversal ? eta : -eta;
  return out;
}

Eigen::Vector2d per_class_weights(const Eigen::VectorXi& labels, AlphaMode mode) {
  Eigen::Vector2d w(1.0, 1.0);
  if (mode == AlphaMode::kUniform) return w;
  const double b = static_cast<double>(labels.size());
  Eigen::Index count1 = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) count1 += labels(i) == 1 ? 1 : 0;
  const Eigen::Index count0 = labels.size() - count1;
  if (count0 > 0) w(0) = b / (2.0 * static_cast<double>(count0));
  if (count1 > 0) w(1) = b / (2.0 * static_cast<double>(count1));
  return w;
}

Eigen::Matrix<double, 6, 1> flatten_stain_matrix(const Eigen::Matrix<double, 3, 2>& w) {
  Eigen::Matrix<double, 6, 1> flat;
  flat << w(0, 0), w(0, 1), w(1, 0), w(1, 1), w(2, 0), w(2, 1);
  return flat;
}

Checkpoint finetune(const TrainDataset& train, const TrainDataset* val, const Checkpoint& init,
                    const AugmentPipeline& pipeline, const FinetuneConfig& cfg, std::uint64_t parent_hash,
                    std::vector<FinetuneLogRow>* log) {
  cfg.validate();
  pipeline.validate();
  train.validate();
  if (init.stage != StageTag::kRelax)
    throw DataError("checkpoint stage mismatch: finetune requires a relax-stage checkpoint, got " +
                    stage_name(init.stage));

  EncoderParams encoder = init.encoder_params();
  HeadParams heads = HeadParams::init(encoder.config.embed_dim, cfg.hidden1, cfg.hidden2, cfg.rng_seed);

  // HED runs explicitly on every image before the pipeline, so the
  // pipeline's own HED step is disabled to avoid a second application.
  AugmentPipeline stage_pipeline = pipeline;
  stage_pipeline.hed_prob = 0.0;

  std::vector<Eigen::MatrixXd> joint = encoder.tensors;
  joint.insert(joint.end(), heads.tensors.begin(), heads.tensors.end());
  AdamState adam(joint);
  TrainConfig opt;
  opt.learning_rate = cfg.learning_rate;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.adam_eps = cfg.adam_eps;
  opt.epochs = cfg.epochs;
  opt.batch_size = std::max(2, cfg.batch_size);
  opt.rng_seed = cfg.rng_seed;

  const std::size_t m = train.size();
  const std::size_t batch_count = (m + cfg.batch_size - 1) / cfg.batch_size;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngEngine shuffle_rng = derive_rng(cfg.rng_seed, {0x46545348ull, static_cast<std::uint64_t>(epoch)});
    const std::vector<int> order = shuffled_order(m, shuffle_rng);
    double total_sum = 0.0, cl_sum = 0.0, aux_sum = 0.0;

    for (std::size_t b = 0; b < batch_count; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(begin + cfg.batch_size, m);
      const int n_img = static_cast<int>(end - begin);

      std::vector<ImageTensor> views(n_img);
      Eigen::MatrixXd targets(n_img, 6);
      Eigen::VectorXi labels(n_img);
      for (int s = 0; s < n_img; ++s) {
        const int u = order[begin + s];
        RngEngine view_rng = derive_rng(cfg.rng_seed,
                                        {0x46544147ull, static_cast<std::uint64_t>(epoch), b, static_cast<std::uint64_t>(s)});
        ImageTensor hed = hed_augment(train.images[u], pipeline.stain, pipeline.hed_strength, view_rng);
        targets.row(s) = flatten_stain_matrix(estimate_stains(rgb_to_od(hed), pipeline.stain).w).transpose();
        views[s] = apply_pipeline(stage_pipeline, hed, view_rng);
        labels(s) = train.labels(u);
      }

      std::vector<const ImageTensor*> ptrs;
      for (const auto& v : views) ptrs.push_back(&v);
      ForwardTrace enc_trace;
      const Eigen::MatrixXd z = forward_batch(encoder, ptrs, &enc_trace);

      RngEngine drop_rng = derive_rng(cfg.rng_seed, {0x44524f50ull, static_cast<std::uint64_t>(epoch), b});
      const HeadTrace head_trace = head_forward(heads, z, true, cfg.dropout_p, drop_rng);

      const Eigen::Vector2d weights = per_class_weights(labels, cfg.class_weight_mode);
      const ScalarWithGrad cl = classification_loss(head_trace.logits, labels, weights);
      const ScalarWithGrad aux = auxiliary_loss(head_trace.aux, targets);
      const TotalFinetuneLoss total = total_finetune_loss(cl.value, aux.value, cfg.eta, cfg.aux_sign);

      // classifier branch at cl_scale; aux head at aux_head_scale; the
      // encoder receives cl_scale plus aux_encoder_scale through z
      const HeadBackward cl_back = head_backward(heads, head_trace, total.cl_scale * cl.grad, Eigen::MatrixXd());
      const HeadBackward aux_head_back =
          head_backward(heads, head_trace, Eigen::MatrixXd(), total.aux_head_scale * aux.grad);
      const HeadBackward aux_enc_back =
          head_backward(heads, head_trace, Eigen::MatrixXd(), total.aux_encoder_scale * aux.grad);

      const Eigen::MatrixXd dz = cl_back.d_embeddings + aux_enc_back.d_embeddings;
      const std::vector<Eigen::MatrixXd> enc_grads = backward_batch(encoder, enc_trace, dz);

      std::vector<Eigen::MatrixXd> joint_grads = enc_grads;
      for (std::size_t t = 0; t < heads.tensors.size(); ++t)
        joint_grads.push_back(cl_back.grads[t] + aux_head_back.grads[t]);

      if (!std::isfinite(total.value)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " batch " << b;
        throw NumericError(msg.str());
      }

      std::vector<Eigen::MatrixXd> joint_params = encoder.tensors;
      joint_params.insert(joint_params.end(), heads.tensors.begin(), heads.tensors.end());
      adam.update(joint_params, joint_grads, opt);
      for (std::size_t t = 0; t < encoder.tensors.size(); ++t) encoder.tensors[t] = joint_params[t];
      for (std::size_t t = 0; t < heads.tensors.size(); ++t) heads.tensors[t] = joint_params[encoder.tensors.size() + t];
      if (!encoder.all_finite()) throw NumericError("non-finite encoder parameters during finetune");

      total_sum += total.value;
      cl_sum += cl.value;
      aux_sum += aux.value;
    }

    FinetuneLogRow row;
    row.epoch = epoch;
    row.mean_total = total_sum / static_cast<double>(batch_count);
    row.mean_classification = cl_sum / static_cast<double>(batch_count);
    row.mean_auxiliary = aux_sum / static_cast<double>(batch_count);
    if (val && !val->images.empty()) {
      const Eigen::VectorXi pred = predict_labels(encoder, heads, val->images);
      Eigen::Index correct = 0;
      Eigen::Index tp = 0, tn = 0, pos = 0, neg = 0;
      for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const bool ok = pred(i) == val->labels(i);
        correct += ok;
        if (val->labels(i) == 1) {
          ++pos;
          tp += ok;
        } else {
          ++neg;
          tn += ok;
        }
      }
      row.val_accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
      const double r_pos = pos > 0 ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
      const double r_neg = neg > 0 ? static_cast<double>(tn) / static_cast<double>(neg) : 0.0;
      row.val_balanced_accuracy = 0.5 * (r_pos + r_neg);
    }
    if (log) log->push_back(row);
  }

  Checkpoint out;
  out.stage = StageTag::kFinetune;
  out.epoch = static_cast<std::uint32_t>(cfg.epochs);
  out.rng_seed = cfg.rng_seed;
  out.parent_hash = parent_hash;
  out.encoder_config = encoder.config;
  out.encoder_tensors = encoder.tensors;
  out.head_tensors = heads.tensors;
  return out;
}

Eigen::VectorXi predict_labels(const EncoderParams& encoder, const HeadParams& heads,
                               const std::vector<ImageTensor>& images) {
  if (images.empty()) throw DataError("cannot predict on an empty image list");
  Eigen::VectorXi pred(static_cast<Eigen::Index>(images.size()));
  RngEngine unused(0);
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, images.size());
    std::vector<const ImageTensor*> ptrs;
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&images[i]);
    const Eigen::MatrixXd z = forward_batch(encoder, ptrs, nullptr);
    const HeadTrace t = head_forward(heads, z, false, 0.0, unused);
    for (Eigen::Index i = 0; i < t.logits.rows(); ++i)
      pred(static_cast<Eigen::Index>(begin) + i) = t.logits(i, 1) > t.logits(i, 0) ? 1 : 0;
  }
  return pred;
}

}  // namespace chl
