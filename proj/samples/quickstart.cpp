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

// Library tour: keys, one encrypted averaging round over three participants,
// and encrypted rewards for the same round.

#include <iostream>
#include <vector>

#include "crowdfl/crowdfl.hpp"

int main() {
  using namespace crowdfl;
  Rng rng(2026);

  // Test-size keys; deployments use zeta = 1024.
  KeyMaterial keys = generate_key_material(512, rng, {.keygen = {.test_mode = true}});
  const PublicKey& pk = keys.pk;
  const int L = 6;
  const int kappa = 128;

  ComputeServer csp(pk, keys.csp_share(), rng.fork("csp"));
  LocalCspLink link(csp);
  SecureOps sp(pk, keys.sp_server_share(), MaskingParams{80, kappa, L}, link, rng.fork("sp"));

  EncodingParams params{FixedPointCodec::make(L, kappa, pk.n), Decimal(101), Decimal(100)};
  std::vector<ModelVector> models = {
      {{parse_decimal("0.50"), parse_decimal("-1.25")}, 30},
      {{parse_decimal("0.55"), parse_decimal("-1.20")}, 10},
      {{parse_decimal("0.90"), parse_decimal("-0.40")}, 20},
  };

  // Participants submit; SP aggregates and runs one batched secure division.
  RoundState round(pk, 2, 1);
  for (std::size_t i = 0; i < models.size(); ++i) {
    round.accept(make_submission(pk, params, models[i], i + 1, 1, true, rng));
  }
  std::vector<Ciphertext> enc_avg = prifedavg_round(round, sp);
  round.mark_released();

  std::vector<Decimal> avg = participant_decrypt(
      pk, keys.participant_share(), params,
      release_average(pk, keys.sp_participant_share(), enc_avg));
  std::vector<Decimal> oracle = fedavg_plain(models, L);
  std::cout << "average:";
  for (std::size_t j = 0; j < avg.size(); ++j) {
    std::cout << ' ' << format_decimal(avg[j], L) << " (plain " << format_decimal(oracle[j], L)
              << ")";
  }
  std::cout << '\n';

  // Rewards from a budget of 36.
  std::vector<RewardParticipant> parts;
  for (const EncryptedSubmission& s : round.accepted()) {
    parts.push_back({s.participant_id, s.enc_model, s.enc_delta});
  }
  Ciphertext budget = enc(pk, params.codec.encode(Decimal(36)), L, rng);
  std::vector<Ciphertext> mu = prirwd(parts, enc_avg, budget, params.codec, sp);
  Decimal total = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    Decimal r = participant_reward(pk, keys.participant_share(), params.codec,
                                   release_reward(pk, keys.sp_participant_share(), mu[i]));
    total += r;
    std::cout << "participant " << parts[i].participant_id << " reward "
              << format_decimal(r, L) << '\n';
  }
  std::cout << "paid " << format_decimal(total, L) << " of 36\n";
  return 0;
}
