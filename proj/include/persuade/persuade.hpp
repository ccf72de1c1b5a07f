#pragma once

#include "persuade/analysis.hpp"
#include "persuade/augment.hpp"
#include "persuade/baseline.hpp"
#include "persuade/corpus.hpp"
#include "persuade/ensemble.hpp"
#include "persuade/error.hpp"
#include "persuade/metrics.hpp"
#include "persuade/taxonomy.hpp"
#include "persuade/text.hpp"
#include "persuade/version.hpp"
