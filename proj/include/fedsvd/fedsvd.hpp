#pragma once

#include "fedsvd/activation.hpp"
#include "fedsvd/dataset.hpp"
#include "fedsvd/error.hpp"
#include "fedsvd/model.hpp"
#include "fedsvd/report.hpp"
#include "fedsvd/simulator.hpp"
#include "fedsvd/svd.hpp"
#include "fedsvd/wire.hpp"
