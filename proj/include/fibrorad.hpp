#ifndef FIBRORAD_HPP
#define FIBRORAD_HPP

#include "fibrorad/common.hpp"
#include "fibrorad/csv.hpp"
#include "fibrorad/volume.hpp"
#include "fibrorad/roi.hpp"
#include "fibrorad/normalize.hpp"
#include "fibrorad/radiomics.hpp"
#include "fibrorad/tabular.hpp"
#include "fibrorad/metrics.hpp"
#include "fibrorad/learners.hpp"
#include "fibrorad/selectors.hpp"
#include "fibrorad/phantom.hpp"
#include "fibrorad/harness.hpp"
#include "fibrorad/pipeline.hpp"
#include "fibrorad/cli.hpp"

#endif
