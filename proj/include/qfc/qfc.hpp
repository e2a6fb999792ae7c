#pragma once

#include "qfc/errors.hpp"
#include "qfc/operator.hpp"
#include "qfc/model.hpp"
#include "qfc/noise.hpp"
#include "qfc/filtering.hpp"
#include "qfc/integrators.hpp"
#include "qfc/control.hpp"
#include "qfc/qubit.hpp"
#include "qfc/serialize.hpp"
#include "qfc/parallel.hpp"
#include "qfc/hjb.hpp"
#include "qfc/montecarlo.hpp"
#include "qfc/verify.hpp"
#include "qfc/config.hpp"
#include "qfc/acceptance.hpp"
