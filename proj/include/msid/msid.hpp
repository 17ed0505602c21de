#pragma once

// Umbrella include for the whole library.

#include "msid/checkpoint.hpp"
#include "msid/common.hpp"
#include "msid/config.hpp"
#include "msid/dataset.hpp"
#include "msid/eval.hpp"
#include "msid/experiment.hpp"
#include "msid/gradcheck.hpp"
#include "msid/graph.hpp"
#include "msid/linalg.hpp"
#include "msid/models.hpp"
#include "msid/optim.hpp"
#include "msid/rng.hpp"
#include "msid/shooting.hpp"
#include "msid/systems.hpp"
#include "msid/tensor.hpp"
#include "msid/ukf.hpp"
