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

// Umbrella header.

#ifndef CROWDFL_CROWDFL_HPP_
#define CROWDFL_CROWDFL_HPP_

#include "crowdfl/bigint.hpp"
#include "crowdfl/bytes.hpp"
#include "crowdfl/dropout.hpp"
#include "crowdfl/error.hpp"
#include "crowdfl/fedavg.hpp"
#include "crowdfl/fixedpoint.hpp"
#include "crowdfl/pctd.hpp"
#include "crowdfl/protocols.hpp"
#include "crowdfl/rewards.hpp"
#include "crowdfl/sim/audit.hpp"
#include "crowdfl/sim/config.hpp"
#include "crowdfl/sim/experiment.hpp"
#include "crowdfl/sim/network.hpp"
#include "crowdfl/sim/socket.hpp"
#include "crowdfl/wire.hpp"

#endif  // CROWDFL_CROWDFL_HPP_
