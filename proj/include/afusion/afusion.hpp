/*
 * Copyright 2026 The afusion Authors.
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

#ifndef AFUSION_AFUSION_HPP_
#define AFUSION_AFUSION_HPP_

#include "afusion/binary_io.hpp"
#include "afusion/config_json.hpp"
#include "afusion/dataset.hpp"
#include "afusion/errors.hpp"
#include "afusion/gradcheck.hpp"
#include "afusion/layers.hpp"
#include "afusion/metrics.hpp"
#include "afusion/model.hpp"
#include "afusion/rng.hpp"
#include "afusion/tensor.hpp"
#include "afusion/training.hpp"

#endif  // AFUSION_AFUSION_HPP_
