#pragma once

// Umbrella header for the training-free GDA toolkit.

#include "gda/error.hpp"
#include "gda/types.hpp"
#include "gda/npy.hpp"
#include "gda/rng.hpp"
#include "gda/data.hpp"
#include "gda/estimators.hpp"
#include "gda/classifier.hpp"
#include "gda/dataset.hpp"
#include "gda/model_io.hpp"
#include "gda/extensions.hpp"
#include "gda/eval.hpp"
