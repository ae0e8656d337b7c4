#pragma once

#include "maxrobust/types.hpp"
#include "maxrobust/fourier.hpp"
#include "maxrobust/norms.hpp"
#include "maxrobust/prox.hpp"
#include "maxrobust/loss.hpp"
#include "maxrobust/data.hpp"
#include "maxrobust/models.hpp"
#include "maxrobust/optimizers.hpp"
#include "maxrobust/attacks.hpp"
#include "maxrobust/oracle.hpp"
#include "maxrobust/io.hpp"
#include "maxrobust/sweep.hpp"
