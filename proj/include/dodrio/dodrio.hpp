#pragma once

#include "dodrio/error.hpp"
#include "dodrio/matrix.hpp"
#include "dodrio/attention_file.hpp"
#include "dodrio/bundle.hpp"
#include "dodrio/layout.hpp"
#include "dodrio/dependency.hpp"
#include "dodrio/head_analytics.hpp"
#include "dodrio/projection.hpp"
#include "dodrio/api.hpp"
