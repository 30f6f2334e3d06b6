/*
 * Copyright 2026 The dlrecover Authors
 *
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

#ifndef DLRECOVER_DLRECOVER_HPP_
#define DLRECOVER_DLRECOVER_HPP_

#include "dlrecover/adversary.hpp"
#include "dlrecover/error.hpp"
#include "dlrecover/ffield.hpp"
#include "dlrecover/history.hpp"
#include "dlrecover/io/checkpoint.hpp"
#include "dlrecover/lbfgs.hpp"
#include "dlrecover/model.hpp"
#include "dlrecover/recovery.hpp"
#include "dlrecover/rng.hpp"
#include "dlrecover/shamir.hpp"
#include "dlrecover/synthetic.hpp"
#include "dlrecover/training.hpp"

#endif  // DLRECOVER_DLRECOVER_HPP_
