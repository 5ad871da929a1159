#ifndef COPRIMARY_COPRIMARY_HPP
#define COPRIMARY_COPRIMARY_HPP

#include "core_types.hpp"
#include "inference.hpp"
#include "mbeta.hpp"
#include "mvnorm.hpp"
#include "normal.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "sampling.hpp"
#include "selection.hpp"
#include "simharness.hpp"

#endif // COPRIMARY_COPRIMARY_HPP
