/*
 * Copyright 2026 The CrowdFL Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Federated averaging: local training, the plaintext weighted-mean oracle, and
// the encrypted round (sum submissions homomorphically, one secure division
// per component, release to participants).
//
// Participants shift every weight by a public integer offset C before
// encrypting so that all sums handed to secure division are positive. The
// offset is removed after decryption.

#ifndef CROWDFL_FEDAVG_HPP_
#define CROWDFL_FEDAVG_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "crowdfl/bigint.hpp"
#include "crowdfl/error.hpp"
#include "crowdfl/fixedpoint.hpp"
#include "crowdfl/pctd.hpp"
#include "crowdfl/protocols.hpp"

namespace crowdfl {

struct ModelVector {
  std::vector<Decimal> weights;
  std::uint64_t delta = 1;  // number of local samples

  std::size_t dim() const { return weights.size(); }
};

struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.empty() ? 0 : x.front().size(); }
};

// CSV with a header row; the last column is the target.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kConfig,
          path + ": missing header");
  Dataset ds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        fail(ErrorCode::kConfig,
             path + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    require(row.size() >= 2, ErrorCode::kShape,
            path + ":" + std::to_string(line_no) + ": need features and a target");
    double target = row.back();
    row.pop_back();
    require(ds.x.empty() || row.size() == ds.dim(), ErrorCode::kShape,
            path + ":" + std::to_string(line_no) + ": ragged row");
    ds.x.push_back(std::move(row));
    ds.y.push_back(target);
  }
  require(ds.size() > 0, ErrorCode::kConfig, path + ": no rows");
  return ds;
}

// y = <x, w_true> + noise, features uniform in [-1, 1].
inline Dataset synthetic_linear(const std::vector<double>& w_true,
                                std::size_t samples, double noise, Rng& rng) {
  Dataset ds;
  for (std::size_t i = 0; i < samples; ++i) {
    std::vector<double> row(w_true.size());
    double target = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = 2 * rng.uniform01() - 1;
      target += row[j] * w_true[j];
    }
    target += noise * (2 * rng.uniform01() - 1);
    ds.x.push_back(std::move(row));
    ds.y.push_back(target);
  }
  return ds;
}

struct TrainConfig {
  double eta = 0.001;
  std::size_t B = 50;
  std::size_t E = 30;

  void validate() const {
    require(eta > 0 && B >= 1 && E >= 1, ErrorCode::kConfig,
            "training needs eta > 0, B >= 1, E >= 1");
  }
};

// Local model trainer. Training runs in doubles; the result is rounded to the
// fixed-point grid by the caller.
class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual std::vector<double> train(const Dataset& data,
                                    std::vector<double> init,
                                    const TrainConfig& cfg, Rng& rng) const = 0;
  virtual double loss(const Dataset& data,
                      const std::vector<double>& w) const = 0;
};

// Least squares, loss 1/2 |Xw - y|^2 / |b| on a batch b.
class LinearRegressionTrainer : public Trainer {
 public:
  static double batch_loss(const Dataset& data, const std::vector<std::size_t>& idx,
                           const std::vector<double>& w) {
    double total = 0;
    for (std::size_t i : idx) {
      double r = residual(data, i, w);
      total += 0.5 * r * r;
    }
    return total / static_cast<double>(idx.size());
  }

  static std::vector<double> gradient(const Dataset& data,
                                      const std::vector<std::size_t>& idx,
                                      const std::vector<double>& w) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t i : idx) {
      double r = residual(data, i, w);
      for (std::size_t j = 0; j < w.size(); ++j) g[j] += r * data.x[i][j];
    }
    for (double& v : g) v /= static_cast<double>(idx.size());
    return g;
  }

  std::vector<double> train(const Dataset& data, std::vector<double> w,
                            const TrainConfig& cfg, Rng& rng) const override {
    cfg.validate();
    require(data.size() > 0, ErrorCode::kDomain, "empty dataset");
    require(data.dim() == w.size(), ErrorCode::kShape,
            "model has " + std::to_string(w.size()) + " weights, data has " +
                std::to_string(data.dim()) + " features");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < cfg.E; ++epoch) {
      // Fisher-Yates with the seeded stream.
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
      }
      for (std::size_t start = 0; start < order.size(); start += cfg.B) {
        std::size_t stop = std::min(order.size(), start + cfg.B);
        std::vector<std::size_t> batch(order.begin() + static_cast<long>(start),
                                       order.begin() + static_cast<long>(stop));
        std::vector<double> g = gradient(data, batch, w);
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= cfg.eta * g[j];
      }
    }
    return w;
  }

  double loss(const Dataset& data, const std::vector<double>& w) const override {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return batch_loss(data, all, w);
  }

 private:
  static double residual(const Dataset& data, std::size_t i,
                         const std::vector<double>& w) {
    double pred = 0;
    for (std::size_t j = 0; j < w.size(); ++j) pred += data.x[i][j] * w[j];
    return pred - data.y[i];
  }
};

inline std::vector<double> local_train(const Dataset& data,
                                       const std::vector<double>& init,
                                       const TrainConfig& cfg, Rng& rng) {
  return LinearRegressionTrainer().train(data, init, cfg, rng);
}

inline std::vector<double> to_doubles(const std::vector<Decimal>& w) {
  std::vector<double> out;
  out.reserve(w.size());
  for (const Decimal& v : w) out.push_back(to_double(v));
  return out;
}

inline std::vector<Decimal> to_grid(const std::vector<double>& w, int L) {
  std::vector<Decimal> out;
  out.reserve(w.size());
  for (double v : w) {
    require(std::isfinite(v), ErrorCode::kRange, "training diverged");
    out.push_back(floor_to_places(from_double(v), L));
  }
  return out;
}

// Exact sum(delta_i w_i) / sum(delta_i), floored to L places.
inline std::vector<Decimal> fedavg_exact(const std::vector<ModelVector>& models) {
  require(!models.empty(), ErrorCode::kDomain, "no models to average");
  const std::size_t dim = models.front().dim();
  std::vector<Decimal> sum(dim, Decimal(0));
  BigInt total = 0;
  for (const ModelVector& m : models) {
    require(m.dim() == dim, ErrorCode::kShape, "models differ in dimension");
    require(m.delta >= 1, ErrorCode::kDomain, "delta must be positive");
    Decimal d(static_cast<unsigned long>(m.delta));
    for (std::size_t j = 0; j < dim; ++j) sum[j] += d * m.weights[j];
    total += static_cast<unsigned long>(m.delta);
  }
  for (Decimal& v : sum) {
    v /= Decimal(total);
    v.canonicalize();
  }
  return sum;
}

inline std::vector<Decimal> fedavg_plain(const std::vector<ModelVector>& models,
                                         int L) {
  std::vector<Decimal> avg = fedavg_exact(models);
  for (Decimal& v : avg) v = floor_to_places(v, L);
  return avg;
}

// Public parameters every participant needs to encode a submission.
struct EncodingParams {
  FixedPointCodec codec;
  Decimal offset;        // C, a positive integer
  Decimal weight_bound;  // |w| <= weight_bound is required
};

struct EncryptedSubmission {
  std::uint64_t participant_id = 0;
  std::uint32_t round = 0;
  std::vector<Ciphertext> enc_weighted;  // [[delta (w + C)]], scale L
  Ciphertext enc_delta;                  // [[delta]], scale 0
  std::vector<Ciphertext> enc_model;     // [[w + C]], scale L; reward input
};

// Each ciphertext gets its own fresh randomness. Computing [[delta (w + C)]]
// from [[w + C]] by scalar multiplication would expose delta to anyone who
// can compare the two.
inline EncryptedSubmission make_submission(const PublicKey& pk,
                                           const EncodingParams& enc_params,
                                           const ModelVector& model,
                                           std::uint64_t participant_id,
                                           std::uint32_t round,
                                           bool include_model, Rng& rng) {
  const FixedPointCodec& codec = enc_params.codec;
  require(model.delta >= 1, ErrorCode::kDomain, "delta must be positive");
  EncryptedSubmission s;
  s.participant_id = participant_id;
  s.round = round;
  const Decimal delta(static_cast<unsigned long>(model.delta));
  for (const Decimal& w : model.weights) {
    require(abs(w) <= enc_params.weight_bound, ErrorCode::kRange,
            "participant " + std::to_string(participant_id) +
                ": weight outside +-" + format_decimal(enc_params.weight_bound, 0));
    Decimal shifted = floor_to_places(w, codec.L) + enc_params.offset;
    s.enc_weighted.push_back(
        enc(pk, codec.encode(delta * shifted), codec.L, rng));
    if (include_model) {
      s.enc_model.push_back(enc(pk, codec.encode(shifted), codec.L, rng));
    }
  }
  s.enc_delta = enc(pk, codec.encode_integer(BigInt(static_cast<unsigned long>(model.delta))), 0, rng);
  return s;
}

// SP's per-round aggregation state: M = product of [[delta_i (w_i + C)]], D =
// product of [[delta_i]] over the accepted set.
class RoundState {
 public:
  RoundState(PublicKey pk, std::size_t dim, std::uint32_t round)
      : pk_(std::move(pk)), dim_(dim), round_(round) {}

  void accept(const EncryptedSubmission& s) {
    require(s.round == round_, ErrorCode::kStateMachine,
            "submission for round " + std::to_string(s.round) + " in round " +
                std::to_string(round_));
    require(s.enc_weighted.size() == dim_, ErrorCode::kShape,
            "submission dimension mismatch");
    require(!s.enc_model.empty() || accepted_.empty() ||
                accepted_.front().enc_model.empty(),
            ErrorCode::kShape, "mixed submissions with and without models");
    require(ids_.insert(s.participant_id).second, ErrorCode::kStateMachine,
            "duplicate submission from participant " +
                std::to_string(s.participant_id));
    for (const Ciphertext& c : s.enc_weighted) validate(pk_, c);
    validate(pk_, s.enc_delta);
    if (accepted_.empty()) {
      m_ = s.enc_weighted;
      d_ = s.enc_delta;
    } else {
      for (std::size_t j = 0; j < dim_; ++j) m_[j] = padd(pk_, m_[j], s.enc_weighted[j]);
      d_ = padd(pk_, d_, s.enc_delta);
    }
    accepted_.push_back(s);
  }

  bool empty() const { return accepted_.empty(); }
  const std::vector<Ciphertext>& M() const { return m_; }
  const Ciphertext& D() const { return d_; }
  const std::vector<EncryptedSubmission>& accepted() const { return accepted_; }
  std::uint32_t round() const { return round_; }
  std::size_t dim() const { return dim_; }

  bool released() const { return released_; }
  void mark_released() {
    require(!released_, ErrorCode::kStateMachine, "average already released");
    released_ = true;
  }

 private:
  PublicKey pk_;
  std::size_t dim_;
  std::uint32_t round_;
  std::vector<Ciphertext> m_;
  Ciphertext d_;
  std::vector<EncryptedSubmission> accepted_;
  std::set<std::uint64_t> ids_;
  bool released_ = false;
};

// [[avg + C]] per component at scale 2L, by one batched secure division.
inline std::vector<Ciphertext> prifedavg_round(const RoundState& state,
                                               SecureOps& ops) {
  require(!state.empty(), ErrorCode::kEmptyRound,
          "round " + std::to_string(state.round()) + " has no accepted submissions");
  std::vector<DivisionInput> items;
  items.reserve(state.dim());
  for (const Ciphertext& m : state.M()) items.push_back({m, state.D()});
  ops.set_round(state.round());
  return ops.sdiv(items);
}

struct ReleasedValue {
  Ciphertext ciphertext;
  PartialDecryption sp_partial;
};

// SP attaches its partial decryption under the participant split.
inline std::vector<ReleasedValue> release_average(
    const PublicKey& pk, const KeyShare& sp_participant_share,
    const std::vector<Ciphertext>& enc_avg) {
  std::vector<ReleasedValue> out;
  out.reserve(enc_avg.size());
  for (const Ciphertext& c : enc_avg) {
    out.push_back({c, pdec(sp_participant_share, pk, c)});
  }
  return out;
}

inline Decimal decrypt_released(const PublicKey& pk, const KeyShare& own_share,
                                const FixedPointCodec& codec,
                                const ReleasedValue& r) {
  PartialDecryption mine = pdec(own_share, pk, r.ciphertext);
  return codec.decode(tdec(r.sp_partial, mine, pk), r.ciphertext.scale);
}

// Completes decryption, removes the offset, floors to L places.
inline std::vector<Decimal> participant_decrypt(
    const PublicKey& pk, const KeyShare& participant_share,
    const EncodingParams& enc_params, const std::vector<ReleasedValue>& released) {
  std::vector<Decimal> out;
  out.reserve(released.size());
  for (const ReleasedValue& r : released) {
    Decimal v = decrypt_released(pk, participant_share, enc_params.codec, r);
    out.push_back(floor_to_places(v - enc_params.offset, enc_params.codec.L));
  }
  return out;
}

struct Participant {
  std::uint64_t id = 0;
  Dataset data;
};

struct TrainingResult {
  std::vector<Decimal> final_model;
  std::vector<std::vector<Decimal>> round_averages;
};

// Key holdings used by the encrypted training loop.
struct TrainingKeys {
  PublicKey pk;
  KeyShare participant_share;     // participants and requester
  KeyShare sp_participant_share;  // SP
};

// Plaintext pipeline: same trainer, same per-participant streams, exact
// averaging floored to L places.
inline TrainingResult run_training_plain(const std::vector<Participant>& parts,
                                         std::size_t T, const TrainConfig& cfg,
                                         std::vector<Decimal> init, int L,
                                         std::uint64_t train_seed) {
  require(T >= 1, ErrorCode::kConfig, "T must be at least 1");
  std::vector<Rng> streams;
  for (const Participant& p : parts) {
    streams.push_back(Rng(train_seed).fork("train-" + std::to_string(p.id)));
  }
  TrainingResult result;
  std::vector<Decimal> global = std::move(init);
  for (std::size_t round = 1; round <= T; ++round) {
    std::vector<ModelVector> models;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      auto w = local_train(parts[i].data, to_doubles(global), cfg, streams[i]);
      models.push_back({to_grid(w, L), parts[i].data.size()});
    }
    global = fedavg_plain(models, L);
    result.round_averages.push_back(global);
  }
  result.final_model = global;
  return result;
}

// Encrypted pipeline. In the last round the average goes to the requester
// only; earlier rounds release it to every participant.
inline TrainingResult run_training(const std::vector<Participant>& parts,
                                   std::size_t T, const TrainConfig& cfg,
                                   std::vector<Decimal> init,
                                   const EncodingParams& enc_params,
                                   const TrainingKeys& keys, SecureOps& ops,
                                   std::uint64_t train_seed, Rng& enc_rng) {
  require(T >= 1, ErrorCode::kConfig, "T must be at least 1");
  const int L = enc_params.codec.L;
  std::vector<Rng> streams;
  for (const Participant& p : parts) {
    streams.push_back(Rng(train_seed).fork("train-" + std::to_string(p.id)));
  }
  TrainingResult result;
  std::vector<Decimal> global = std::move(init);
  for (std::size_t round = 1; round <= T; ++round) {
    RoundState state(keys.pk, global.size(), static_cast<std::uint32_t>(round));
    for (std::size_t i = 0; i < parts.size(); ++i) {
      auto w = local_train(parts[i].data, to_doubles(global), cfg, streams[i]);
      ModelVector model{to_grid(w, L), parts[i].data.size()};
      state.accept(make_submission(keys.pk, enc_params, model, parts[i].id,
                                   static_cast<std::uint32_t>(round), false,
                                   enc_rng));
    }
    std::vector<Ciphertext> avg;
    try {
      avg = prifedavg_round(state, ops);
    } catch (const Error& e) {
      throw e.with_context("round " + std::to_string(round));
    }
    state.mark_released();
    global = participant_decrypt(
        keys.pk, keys.participant_share, enc_params,
        release_average(keys.pk, keys.sp_participant_share, avg));
    result.round_averages.push_back(global);
  }
  result.final_model = global;
  return result;
}

}  // namespace crowdfl

#endif  // CROWDFL_FEDAVG_HPP_
