#pragma once

#include "memlane/datagen.hpp"
#include "memlane/dataio.hpp"
#include "memlane/errors.hpp"
#include "memlane/gradcheck.hpp"
#include "memlane/inference.hpp"
#include "memlane/metrics.hpp"
#include "memlane/model.hpp"
#include "memlane/nn.hpp"
#include "memlane/rng.hpp"
#include "memlane/tensor.hpp"
#include "memlane/training.hpp"
