// vamce/vamce.hpp
//
// Copyright 2026 The vamce authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "vamce/adam.hpp"
#include "vamce/common.hpp"
#include "vamce/corpus.hpp"
#include "vamce/eval.hpp"
#include "vamce/gradcheck.hpp"
#include "vamce/isnmf.hpp"
#include "vamce/matrix.hpp"
#include "vamce/mcem.hpp"
#include "vamce/parallel.hpp"
#include "vamce/rng.hpp"
#include "vamce/stft.hpp"
#include "vamce/vae.hpp"
#include "vamce/vae_train.hpp"
#include "vamce/wav.hpp"
