#pragma once

#include "gti/checkpoint.hpp"
#include "gti/crf.hpp"
#include "gti/data.hpp"
#include "gti/errors.hpp"
#include "gti/eval.hpp"
#include "gti/gradcheck.hpp"
#include "gti/graph.hpp"
#include "gti/jobs.hpp"
#include "gti/model.hpp"
#include "gti/nn.hpp"
#include "gti/params.hpp"
#include "gti/rng.hpp"
#include "gti/tensor.hpp"
#include "gti/train.hpp"
