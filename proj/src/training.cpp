#include "emos/training.hpp"

#include "emos/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace emos {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ArgumentError("TrainConfig: batch_size must be positive");
  if (steps < 0) throw ArgumentError("TrainConfig: steps must be non-negative");
  if (!(learning_rate >= 0.0)) throw ArgumentError("TrainConfig: learning_rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ArgumentError("TrainConfig: Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ArgumentError("TrainConfig: epsilon must be positive");
  if (!(clip_norm > 0.0)) throw ArgumentError("TrainConfig: clip_norm must be positive");
  if (checkpoint_interval < 0) throw ArgumentError("TrainConfig: checkpoint_interval must be non-negative");
  if (weights.tac < 0.0 || weights.sty < 0.0 || weights.cls_src < 0.0 || weights.cls_tgt < 0.0) {
    throw ArgumentError("TrainConfig: loss weights must be non-negative");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  const LossWeights& w = c.weights;
  const SynthesizerConfig& m = c.model;
  return {
      {"seed", c.seed},
      {"batch_size", c.batch_size},
      {"steps", c.steps},
      {"learning_rate", c.learning_rate},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"epsilon", c.epsilon},
      {"clip_norm", c.clip_norm},
      {"checkpoint_interval", c.checkpoint_interval},
      {"weights",
       {{"tac", w.tac},
        {"sty", w.sty},
        {"cls_src", w.cls_src},
        {"cls_tgt", w.cls_tgt},
        {"use_sty", w.use_sty},
        {"use_cls_src", w.use_cls_src},
        {"use_cls_tgt", w.use_cls_tgt}}},
      {"model",
       {{"vocab", m.vocab},
        {"char_dim", m.char_dim},
        {"prenet", m.prenet},
        {"encoder", m.encoder},
        {"attention", m.attention},
        {"decoder", m.decoder},
        {"decoder_prenet", m.decoder_prenet},
        {"n_mels", m.n_mels},
        {"embedding", m.embedding}}},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  const auto read = [](const nlohmann::json& obj, const char* key, auto& field) {
    if (obj.contains(key)) field = obj.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  try {
    read(j, "seed", c.seed);
    read(j, "batch_size", c.batch_size);
    read(j, "steps", c.steps);
    read(j, "learning_rate", c.learning_rate);
    read(j, "beta1", c.beta1);
    read(j, "beta2", c.beta2);
    read(j, "epsilon", c.epsilon);
    read(j, "clip_norm", c.clip_norm);
    read(j, "checkpoint_interval", c.checkpoint_interval);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      read(w, "tac", c.weights.tac);
      read(w, "sty", c.weights.sty);
      read(w, "cls_src", c.weights.cls_src);
      read(w, "cls_tgt", c.weights.cls_tgt);
      read(w, "use_sty", c.weights.use_sty);
      read(w, "use_cls_src", c.weights.use_cls_src);
      read(w, "use_cls_tgt", c.weights.use_cls_tgt);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      read(m, "vocab", c.model.vocab);
      read(m, "char_dim", c.model.char_dim);
      read(m, "prenet", c.model.prenet);
      read(m, "encoder", c.model.encoder);
      read(m, "attention", c.model.attention);
      read(m, "decoder", c.model.decoder);
      read(m, "decoder_prenet", c.model.decoder_prenet);
      read(m, "n_mels", c.model.n_mels);
      read(m, "embedding", c.model.embedding);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string to_json_line(const StepMetrics& m) {
  const LossBreakdown& l = m.loss;
  const nlohmann::json j = {
      {"step", m.step},
      {"l_tac", l.l_tac},
      {"l_mel", l.l_mel},
      {"l_stop", l.l_stop},
      {"l_sty", l.l_sty},
      {"l_cls_src", l.l_cls_src},
      {"l_cls_tgt", l.l_cls_tgt},
      {"l_total", l.l_total},
      {"grad_norm", m.grad_norm},
      {"clipped_norm", m.clipped_norm},
      {"classification_losses", m.classification_losses},
      {"auxiliary_passes", m.auxiliary_passes},
  };
  return j.dump();
}

namespace {

Var batch_mean(std::span<const Var> terms) {
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return terms.size() == 1 ? total : affine(total, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

BatchForward batch_forward(Tape& tape, EmotionalTts& model, std::span<const CorpusItem* const> batch,
                           const LossWeights& weights) {
  if (batch.empty()) throw ArgumentError("batch_forward: empty batch");
  const std::size_t ce_before = tape.count("softmax_cross_entropy");
  BatchForward out;

  std::vector<std::vector<int>> chars;
  std::vector<RowMatrix> targets;
  std::vector<Var> target_vars, conditioning;
  std::vector<EmotionEncoding> references;
  std::vector<int> labels;
  for (const CorpusItem* item : batch) {
    const Var mel = tape.constant(Tensor::matrix(item->mel));
    EmotionEncoding enc = model.embedding_net.encode(mel);
    conditioning.push_back(enc.embedding);
    references.push_back(enc);
    target_vars.push_back(mel);
    chars.push_back(item->chars);
    targets.push_back(item->mel);
    labels.push_back(item->label);
  }

  const std::vector<DecodedUtterance> decoded = model.synthesizer.teacher_forced(chars, targets, conditioning);

  std::vector<Var> mel_terms, stop_terms, style_terms, src_logits, tgt_logits;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const DecodedUtterance& d = decoded[b];
    mel_terms.push_back(mse(d.mel, target_vars[b]));
    Tensor stop_target(Shape{d.stop_logits.rows(), 1});
    stop_target[stop_target.size() - 1] = 1.0;
    stop_terms.push_back(bce_with_logits(d.stop_logits, tape.constant(std::move(stop_target))));
    src_logits.push_back(references[b].logits);
    if (weights.needs_auxiliary()) {
      const EmotionEncoding aux = model.auxiliary_net.encode(d.mel);
      ++out.auxiliary_passes;
      if (weights.use_sty) style_terms.push_back(style_loss(references[b].feature_map, aux.feature_map));
      tgt_logits.push_back(aux.logits);
    }
  }

  LossTerms& terms = out.terms;
  terms.mel = batch_mean(mel_terms);
  terms.stop = batch_mean(stop_terms);
  if (weights.use_sty) terms.sty = batch_mean(style_terms);
  if (weights.use_cls_src) terms.cls_src = softmax_cross_entropy(concat_rows(src_logits), labels);
  if (weights.use_cls_tgt) terms.cls_tgt = softmax_cross_entropy(concat_rows(tgt_logits), labels);
  combine_terms(terms, weights);
  out.classification_losses = tape.count("softmax_cross_entropy") - ce_before;
  return out;
}

double gradient_norm(std::span<Parameter* const> params) {
  double total = 0.0;
  for (const Parameter* p : params) total += p->grad.flat().squaredNorm();
  return std::sqrt(total);
}

double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  const double norm = gradient_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Parameter* p : params) p->grad.flat() *= scale;
  }
  return norm;
}

AdamOptimizer::AdamOptimizer(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamOptimizer::step(std::span<Parameter* const> params, const TrainConfig& c) {
  if (params.size() != m_.size()) throw ArgumentError("AdamOptimizer: parameter count changed");
  ++t_;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    auto m = m_[i].flat().array();
    auto v = v_[i].flat().array();
    const auto g = p.grad.flat().array();
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    p.value.flat().array() -= c.learning_rate * (m / correction1) / ((v / correction2).sqrt() + c.epsilon);
  }
}

// Checkpoint format.

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no tensor named '" + name + "'");
}

namespace {

constexpr char kMagic[4] = {'E', 'M', 'O', 'S'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  const std::uint8_t* take(std::size_t n) {
    if (n > data_.size() - pos_) throw CorruptionError("checkpoint truncated");
    const std::uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string string() {
    const std::uint32_t n = u32();
    const std::uint8_t* p = take(n);
    return {reinterpret_cast<const char*>(p), n};
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(checkpoint.version);
  w.u64(checkpoint.step);
  w.string(checkpoint.config.dump());
  w.string(checkpoint.rng_state);
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& [name, t] : checkpoint.tensors) {
    w.string(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape()) w.u64(static_cast<std::uint64_t>(d));
    for (Index i = 0; i < t.size(); ++i) w.f64(t[i]);
  }
  w.u64(fnv1a(w.out));
  return std::move(w.out);
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw CorruptionError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic, expected EMOS");
  Reader header(bytes.subspan(4, 4));
  const std::uint32_t version = header.u32();
  if (version > Checkpoint::kVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + " is newer than supported version " +
                       std::to_string(Checkpoint::kVersion));
  }
  if (bytes.size() < 16) throw CorruptionError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  const auto body = bytes.first(bytes.size() - 8);
  Reader trailer(bytes.last(8));
  const std::uint64_t stored = trailer.u64();
  const std::uint64_t actual = fnv1a(body);
  if (stored != actual) {
    throw CorruptionError("checkpoint hash mismatch: stored " + hex64(stored) + ", computed " + hex64(actual));
  }

  Reader r(body.subspan(8));
  Checkpoint c;
  c.version = version;
  c.step = r.u64();
  const std::string config = r.string();
  try {
    c.config = nlohmann::json::parse(config);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint config: ") + e.what());
  }
  c.rng_state = r.string();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string();
    const std::uint32_t rank = r.u32();
    Shape shape;
    std::uint64_t size = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64();
      if (d > r.remaining()) throw CorruptionError("checkpoint tensor '" + name + "' has implausible shape");
      shape.push_back(static_cast<Index>(d));
      size *= d;
    }
    if (size * 8 > r.remaining()) throw CorruptionError("checkpoint truncated in tensor '" + name + "'");
    Tensor t(shape);
    for (Index k = 0; k < t.size(); ++k) t[k] = r.f64();
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw CorruptionError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

namespace {

void restore_parameters(std::span<Parameter* const> params, const Checkpoint& c) {
  for (Parameter* p : params) {
    const Tensor& t = c.tensor(p->name);
    if (t.shape() != p->value.shape()) {
      throw FormatError("checkpoint tensor '" + p->name + "' has shape " + shape_string(t.shape()) + ", expected " +
                        shape_string(p->value.shape()));
    }
    p->value = t;
    p->zero_grad();
  }
}

}  // namespace

EmotionalTts model_from_checkpoint(const Checkpoint& checkpoint) {
  const TrainConfig config = train_config_from_json(checkpoint.config);
  EmotionalTts model(config.model, config.seed);
  restore_parameters(model.parameters(), checkpoint);
  return model;
}

// Trainer.

Trainer::Trainer(std::vector<CorpusItem> corpus, const TrainConfig& config)
    : corpus_(std::move(corpus)), config_(config), model_(config.model, config.seed),
      rng_(derive_seed(config.seed, 0x5A11)) {
  config_.validate();
  train_ = select_split(corpus_, "train");
  if (train_.empty()) throw ArgumentError("Trainer: corpus has no training items");
  for (const CorpusItem* item : train_) {
    if (item->mel.cols() != config_.model.n_mels) {
      throw DimensionError("Trainer: item " + item->id + " has " + std::to_string(item->mel.cols()) +
                           " bands, model expects " + std::to_string(config_.model.n_mels));
    }
  }
  params_ = model_.parameters();
  optimizer_ = AdamOptimizer(params_);
  order_.resize(train_.size());
  cursor_ = static_cast<Index>(order_.size());
}

Trainer::Trainer(std::vector<CorpusItem> corpus, const Checkpoint& checkpoint)
    : Trainer(std::move(corpus), train_config_from_json(checkpoint.config)) {
  restore_parameters(params_, checkpoint);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string& name = params_[i]->name;
    optimizer_.first_moments()[i] = checkpoint.tensor("adam.m/" + name);
    optimizer_.second_moments()[i] = checkpoint.tensor("adam.v/" + name);
  }
  optimizer_.set_steps(static_cast<std::int64_t>(checkpoint.tensor("adam.t").item()));
  const Tensor& order = checkpoint.tensor("sampler.order");
  if (order.size() != static_cast<Index>(order_.size())) {
    throw FormatError("checkpoint sampler covers " + std::to_string(order.size()) + " items, corpus has " +
                      std::to_string(order_.size()));
  }
  for (Index i = 0; i < order.size(); ++i) order_[static_cast<std::size_t>(i)] = static_cast<Index>(order[i]);
  cursor_ = static_cast<Index>(checkpoint.tensor("sampler.cursor").item());
  rng_.set_state(checkpoint.rng_state);
  step_ = checkpoint.step;
}

std::vector<const CorpusItem*> Trainer::next_batch() {
  std::vector<const CorpusItem*> batch;
  const auto n = static_cast<Index>(order_.size());
  while (static_cast<Index>(batch.size()) < std::min(config_.batch_size, n)) {
    if (cursor_ >= n) {
      for (Index i = 0; i < n; ++i) order_[static_cast<std::size_t>(i)] = i;
      for (Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Index>(rng_.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(order_[static_cast<std::size_t>(i)], order_[static_cast<std::size_t>(j)]);
      }
      cursor_ = 0;
    }
    batch.push_back(train_[static_cast<std::size_t>(order_[static_cast<std::size_t>(cursor_++)])]);
  }
  return batch;
}

StepMetrics Trainer::step() {
  const std::vector<const CorpusItem*> batch = next_batch();
  for (Parameter* p : params_) p->zero_grad();

  Tape tape;
  for (Parameter* p : params_) tape.parameter(*p);
  BatchForward forward = batch_forward(tape, model_, batch, config_.weights);

  StepMetrics m;
  m.step = static_cast<Index>(step_ + 1);
  m.loss = forward.terms.values();
  m.classification_losses = forward.classification_losses;
  m.auxiliary_passes = forward.auxiliary_passes;
  if (!std::isfinite(m.loss.l_total)) {
    throw NumericError("non-finite loss at step " + std::to_string(m.step) + ": " + to_json_line(m));
  }

  tape.backward(forward.terms.total);
  m.grad_norm = clip_gradients(params_, config_.clip_norm);
  m.clipped_norm = gradient_norm(params_);
  optimizer_.step(params_, config_);
  ++step_;
  return m;
}

void Trainer::run(const std::function<void(const StepMetrics&)>& sink, const std::filesystem::path& checkpoint_dir) {
  while (step_ < static_cast<std::uint64_t>(config_.steps)) {
    const StepMetrics m = step();
    if (sink) sink(m);
    if (!checkpoint_dir.empty() && config_.checkpoint_interval > 0 &&
        step_ % static_cast<std::uint64_t>(config_.checkpoint_interval) == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06llu.ckpt", static_cast<unsigned long long>(step_));
      save_checkpoint(checkpoint(), checkpoint_dir / name);
    }
  }
}

Checkpoint Trainer::checkpoint() {
  Checkpoint c;
  c.step = step_;
  c.config = to_json(config_);
  c.rng_state = rng_.state();
  for (const Parameter* p : params_) c.tensors.emplace_back(p->name, p->value);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    c.tensors.emplace_back("adam.m/" + params_[i]->name, optimizer_.first_moments()[i]);
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    c.tensors.emplace_back("adam.v/" + params_[i]->name, optimizer_.second_moments()[i]);
  }
  c.tensors.emplace_back("adam.t", Tensor::scalar(static_cast<double>(optimizer_.steps())));
  Tensor order(Shape{static_cast<Index>(order_.size())});
  for (std::size_t i = 0; i < order_.size(); ++i) order[static_cast<Index>(i)] = static_cast<double>(order_[i]);
  c.tensors.emplace_back("sampler.order", std::move(order));
  c.tensors.emplace_back("sampler.cursor", Tensor::scalar(static_cast<double>(cursor_)));
  return c;
}

}  // namespace emos
