#pragma once

#include "shared_transfer/dictionary.hpp"
#include "shared_transfer/errors.hpp"
#include "shared_transfer/experiments.hpp"
#include "shared_transfer/io.hpp"
#include "shared_transfer/learner.hpp"
#include "shared_transfer/parallel.hpp"
#include "shared_transfer/random.hpp"
#include "shared_transfer/sparse_coding.hpp"
#include "shared_transfer/splines.hpp"
