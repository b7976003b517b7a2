//
// Copyright 2026 The lastmile Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef LASTMILE_LASTMILE_HPP_
#define LASTMILE_LASTMILE_HPP_

#include "lastmile/autodiff.hpp"
#include "lastmile/checkpoint.hpp"
#include "lastmile/config.hpp"
#include "lastmile/corpus.hpp"
#include "lastmile/error.hpp"
#include "lastmile/gradients.hpp"
#include "lastmile/metrics.hpp"
#include "lastmile/mle.hpp"
#include "lastmile/negatives.hpp"
#include "lastmile/optim.hpp"
#include "lastmile/pipeline.hpp"
#include "lastmile/ppo.hpp"
#include "lastmile/reward.hpp"
#include "lastmile/seeding.hpp"
#include "lastmile/seqmodel.hpp"
#include "lastmile/verify.hpp"

#endif  // LASTMILE_LASTMILE_HPP_
