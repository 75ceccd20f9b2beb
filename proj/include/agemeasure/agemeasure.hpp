#ifndef AGEMEASURE_AGEMEASURE_HPP
#define AGEMEASURE_AGEMEASURE_HPP

#include "agemeasure/confidence.hpp"
#include "agemeasure/errors.hpp"
#include "agemeasure/estimators.hpp"
#include "agemeasure/format.hpp"
#include "agemeasure/harness.hpp"
#include "agemeasure/pathfn.hpp"
#include "agemeasure/popcore.hpp"
#include "agemeasure/rng.hpp"
#include "agemeasure/simkernel.hpp"

#endif  // AGEMEASURE_AGEMEASURE_HPP
