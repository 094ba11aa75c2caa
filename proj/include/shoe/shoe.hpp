// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "shoe/cca.hpp"
#include "shoe/classify.hpp"
#include "shoe/core.hpp"
#include "shoe/embeddings.hpp"
#include "shoe/error.hpp"
#include "shoe/experiment.hpp"
#include "shoe/features.hpp"
#include "shoe/io.hpp"
#include "shoe/lsh.hpp"
#include "shoe/metrics.hpp"
#include "shoe/random.hpp"
#include "shoe/retrieval.hpp"
#include "shoe/synthetic.hpp"
#include "shoe/trainer.hpp"
