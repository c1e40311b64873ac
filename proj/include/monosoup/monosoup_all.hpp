#pragma once

#include "monosoup/blocks.hpp"
#include "monosoup/checkpoint_io.hpp"
#include "monosoup/command_evaluator.hpp"
#include "monosoup/diagnostics.hpp"
#include "monosoup/dtype.hpp"
#include "monosoup/error.hpp"
#include "monosoup/merge.hpp"
#include "monosoup/monosoup.hpp"
#include "monosoup/parallel.hpp"
#include "monosoup/report_io.hpp"
#include "monosoup/spectral.hpp"
#include "monosoup/tensor.hpp"
