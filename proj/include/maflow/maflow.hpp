#pragma once

#include "maflow/config.hpp"
#include "maflow/diagnostics.hpp"
#include "maflow/elliptic.hpp"
#include "maflow/flow.hpp"
#include "maflow/io.hpp"
#include "maflow/ma_operator.hpp"
#include "maflow/model.hpp"
