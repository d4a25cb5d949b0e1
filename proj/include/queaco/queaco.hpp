// Copyright 2026 The QUEACO Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header for the QUEACO library.

#pragma once

#include "queaco/common.hpp"
#include "queaco/corpus.hpp"
#include "queaco/eval.hpp"
#include "queaco/optim.hpp"
#include "queaco/tagger.hpp"
#include "queaco/clicklog.hpp"
#include "queaco/weaklabel.hpp"
#include "queaco/synth.hpp"
#include "queaco/train.hpp"
#include "queaco/avn.hpp"
