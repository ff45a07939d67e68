#include "emos/synthesizer.hpp"

#include "emos/errors.hpp"

#include <algorithm>
#include <cmath>

namespace emos {

Synthesizer::Synthesizer(const SynthesizerConfig& config, Rng& rng) : config_(config) {
  const SynthesizerConfig& c = config_;
  embedding_ = Parameter("synth.embedding", glorot(c.vocab, c.char_dim, rng));
  prenet1_ = Linear("synth.prenet1", c.char_dim, c.prenet, rng);
  prenet2_ = Linear("synth.prenet2", c.prenet, c.prenet, rng);
  encoder_forward_ = GruLayer("synth.encoder_fwd", c.prenet, c.encoder, rng);
  encoder_backward_ = GruLayer("synth.encoder_bwd", c.prenet, c.encoder, rng);
  memory_key_ = Parameter("synth.memory_key", glorot(c.memory_dim(), c.attention, rng));
  query_ = Linear("synth.query", c.decoder, c.attention, rng);
  attention_v_ = Parameter("synth.attention_v", glorot(c.attention, 1, rng).reshaped(Shape{c.attention}));
  decoder_prenet1_ = Linear("synth.decoder_prenet1", c.n_mels, c.decoder_prenet, rng);
  decoder_prenet2_ = Linear("synth.decoder_prenet2", c.decoder_prenet, c.decoder_prenet, rng);
  decoder1_ = GruLayer("synth.decoder1", c.decoder_prenet + c.memory_dim(), c.decoder, rng);
  decoder2_ = GruLayer("synth.decoder2", c.decoder, c.decoder, rng);
  frame_ = Linear("synth.frame", c.decoder + c.memory_dim(), c.n_mels, rng);
  stop_ = Linear("synth.stop", c.decoder + c.memory_dim(), 1, rng);
}

Var Synthesizer::encode_text(Tape& tape, const std::vector<int>& chars) {
  if (chars.empty()) throw ArgumentError("Synthesizer: empty character sequence");
  std::vector<Index> rows;
  rows.reserve(chars.size());
  for (int c : chars) {
    if (c < 0 || c >= config_.vocab) {
      throw VocabularyError("character index " + std::to_string(c) + " outside vocabulary of " +
                            std::to_string(config_.vocab));
    }
    rows.push_back(c);
  }
  const Var embedded = select_rows(tape.parameter(embedding_), rows);
  const Var features = relu(prenet2_(relu(prenet1_(embedded))));

  const auto length = static_cast<Index>(chars.size());
  const GruWeights fw = encoder_forward_.bind(tape);
  const GruWeights bw = encoder_backward_.bind(tape);
  std::vector<Var> forward(static_cast<std::size_t>(length));
  std::vector<Var> backward(static_cast<std::size_t>(length));
  Var h = tape.constant(Tensor(Shape{1, config_.encoder}));
  for (Index l = 0; l < length; ++l) {
    const Index row[] = {l};
    h = gru_cell(select_rows(features, row), h, fw, l);
    forward[static_cast<std::size_t>(l)] = h;
  }
  h = tape.constant(Tensor(Shape{1, config_.encoder}));
  for (Index l = length; l-- > 0;) {
    const Index row[] = {l};
    h = gru_cell(select_rows(features, row), h, bw, l);
    backward[static_cast<std::size_t>(l)] = h;
  }
  const Var parts[] = {concat_rows(forward), concat_rows(backward)};
  return concat_cols(parts);
}

Synthesizer::Memory Synthesizer::build_memory(Tape& tape, std::span<const std::vector<int>> chars,
                                              std::span<const Var> conditioning) {
  Memory memory;
  Index longest = 0;
  for (const auto& c : chars) longest = std::max(longest, static_cast<Index>(c.size()));
  std::vector<Var> blocks;
  for (std::size_t b = 0; b < chars.size(); ++b) {
    const Var& e = conditioning[b];
    if (e.rows() != 1 || e.cols() != config_.embedding) {
      throw DimensionError("Synthesizer: conditioning must be [1 x " + std::to_string(config_.embedding) +
                           "], got " + shape_string(e.shape()));
    }
    const Var encoded = encode_text(tape, chars[b]);
    const Index length = encoded.rows();
    const Var parts[] = {encoded, repeat_rows(e, length)};
    blocks.push_back(concat_cols(parts));
    if (length < longest) blocks.push_back(tape.constant(Tensor(Shape{longest - length, config_.memory_dim()})));
    memory.lengths.push_back(length);
  }
  memory.values = concat_rows(blocks);
  memory.keys = matmul(memory.values, tape.parameter(memory_key_));
  return memory;
}

Synthesizer::State Synthesizer::initial_state(Tape& tape, Index batch) const {
  return {tape.constant(Tensor(Shape{batch, config_.decoder})), tape.constant(Tensor(Shape{batch, config_.decoder})),
          tape.constant(Tensor(Shape{batch, config_.memory_dim()}))};
}

Synthesizer::StepOutput Synthesizer::step(Var previous, State& state, const Memory& memory,
                                          const GruWeights& w1, const GruWeights& w2, Index t) {
  Tape& tape = previous.tape();
  const Var pre = relu(decoder_prenet2_(relu(decoder_prenet1_(previous))));
  const Var input[] = {pre, state.context};
  state.h1 = gru_cell(concat_cols(input), state.h1, w1, t);
  state.h2 = gru_cell(state.h1, state.h2, w2, t);
  const Var out = add(state.h1, state.h2);
  StepOutput result;
  result.weights = additive_attention(query_(out), memory.keys, tape.parameter(attention_v_), memory.lengths);
  state.context = attention_context(result.weights, memory.values);
  const Var joined[] = {out, state.context};
  const Var features = concat_cols(joined);
  result.frame = frame_(features);
  result.stop = stop_(features);
  return result;
}

std::vector<DecodedUtterance> Synthesizer::teacher_forced(std::span<const std::vector<int>> chars,
                                                          std::span<const RowMatrix> targets,
                                                          std::span<const Var> conditioning) {
  const auto batch = static_cast<Index>(chars.size());
  if (batch == 0 || targets.size() != chars.size() || conditioning.size() != chars.size()) {
    throw ArgumentError("Synthesizer::teacher_forced: batch size mismatch");
  }
  Tape& tape = conditioning.front().tape();
  Index longest = 0;
  for (const RowMatrix& target : targets) {
    if (target.rows() < 1 || target.cols() != config_.n_mels) {
      throw DimensionError("Synthesizer::teacher_forced: target must be [T x " + std::to_string(config_.n_mels) +
                           "] with T >= 1, got [" + std::to_string(target.rows()) + "x" +
                           std::to_string(target.cols()) + "]");
    }
    longest = std::max(longest, target.rows());
  }

  const Memory memory = build_memory(tape, chars, conditioning);
  const GruWeights w1 = decoder1_.bind(tape);
  const GruWeights w2 = decoder2_.bind(tape);
  State state = initial_state(tape, batch);

  std::vector<Var> frames, stops;
  std::vector<RowMatrix> weights;
  frames.reserve(static_cast<std::size_t>(longest));
  for (Index t = 0; t < longest; ++t) {
    Tensor previous(Shape{batch, config_.n_mels});
    if (t > 0) {
      for (Index b = 0; b < batch; ++b) {
        const RowMatrix& target = targets[static_cast<std::size_t>(b)];
        if (t - 1 < target.rows()) previous.matrix().row(b) = target.row(t - 1);
      }
    }
    const StepOutput out = step(tape.constant(std::move(previous)), state, memory, w1, w2, t);
    frames.push_back(out.frame);
    stops.push_back(out.stop);
    weights.push_back(out.weights.value().matrix());
  }

  const Var all_frames = concat_rows(frames);
  const Var all_stops = concat_rows(stops);
  std::vector<DecodedUtterance> result(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    const Index length = targets[static_cast<std::size_t>(b)].rows();
    const Index text = memory.lengths[static_cast<std::size_t>(b)];
    std::vector<Index> rows(static_cast<std::size_t>(length));
    DecodedUtterance& item = result[static_cast<std::size_t>(b)];
    item.alignment.resize(length, text);
    for (Index t = 0; t < length; ++t) {
      rows[static_cast<std::size_t>(t)] = t * batch + b;
      item.alignment.row(t) = weights[static_cast<std::size_t>(t)].row(b).head(text);
    }
    item.mel = select_rows(all_frames, rows);
    item.stop_logits = select_rows(all_stops, rows);
  }
  return result;
}

namespace {

Vector stop_probabilities(const Tensor& logits) {
  return logits.flat().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-std::clamp(v, -40.0, 40.0))); });
}

}  // namespace

SynthesisResult Synthesizer::forward_teacher_forced(const std::vector<int>& chars, const RowMatrix& target,
                                                    const Tensor& conditioning) {
  Tape tape;
  tape.set_grad_enabled(false);
  const Var e = tape.constant(conditioning.reshaped(Shape{1, conditioning.size()}));
  const std::vector<int> text[] = {chars};
  const RowMatrix mels[] = {target};
  const Var cond[] = {e};
  const auto decoded = teacher_forced(text, mels, cond);
  SynthesisResult result;
  result.mel = decoded.front().mel.value().matrix();
  result.alignment = decoded.front().alignment;
  result.stop_probabilities = stop_probabilities(decoded.front().stop_logits.value());
  return result;
}

SynthesisResult Synthesizer::synthesize(const std::vector<int>& chars, const Tensor& conditioning,
                                        Index max_frames) {
  if (max_frames < 1) throw ArgumentError("Synthesizer::synthesize: max_frames must be positive");
  Tape tape;
  tape.set_grad_enabled(false);
  const Var e = tape.constant(conditioning.reshaped(Shape{1, conditioning.size()}));
  const std::vector<int> text[] = {chars};
  const Var cond[] = {e};
  const Memory memory = build_memory(tape, text, cond);
  const GruWeights w1 = decoder1_.bind(tape);
  const GruWeights w2 = decoder2_.bind(tape);
  State state = initial_state(tape, 1);

  std::vector<Eigen::RowVectorXd> frames;
  std::vector<Eigen::RowVectorXd> align;
  std::vector<double> stops;
  Tensor previous(Shape{1, config_.n_mels});
  SynthesisResult result;
  result.truncated = true;
  for (Index t = 0; t < max_frames; ++t) {
    const StepOutput out = step(tape.constant(previous), state, memory, w1, w2, t);
    previous = out.frame.value();
    frames.push_back(previous.matrix().row(0));
    align.push_back(out.weights.value().matrix().row(0));
    const double p = stop_probabilities(out.stop.value())[0];
    stops.push_back(p);
    if (p > 0.5) {
      result.truncated = false;
      break;
    }
  }
  const auto n = static_cast<Index>(frames.size());
  result.mel.resize(n, config_.n_mels);
  result.alignment.resize(n, static_cast<Index>(chars.size()));
  result.stop_probabilities.resize(n);
  for (Index t = 0; t < n; ++t) {
    result.mel.row(t) = frames[static_cast<std::size_t>(t)];
    result.alignment.row(t) = align[static_cast<std::size_t>(t)];
    result.stop_probabilities[t] = stops[static_cast<std::size_t>(t)];
  }
  return result;
}

std::vector<Parameter*> Synthesizer::parameters() {
  std::vector<Parameter*> out{&embedding_};
  prenet1_.collect(out);
  prenet2_.collect(out);
  encoder_forward_.collect(out);
  encoder_backward_.collect(out);
  out.push_back(&memory_key_);
  query_.collect(out);
  out.push_back(&attention_v_);
  decoder_prenet1_.collect(out);
  decoder_prenet2_.collect(out);
  decoder1_.collect(out);
  decoder2_.collect(out);
  frame_.collect(out);
  stop_.collect(out);
  return out;
}

}  // namespace emos
