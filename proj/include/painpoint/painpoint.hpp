#pragma once

// Umbrella header; http_transport.hpp is separate so offline builds never
// pull in the networking stack.

#include "painpoint/analyzer.hpp"
#include "painpoint/clusterer.hpp"
#include "painpoint/errors.hpp"
#include "painpoint/gateway.hpp"
#include "painpoint/log_ingest.hpp"
#include "painpoint/logic_graph.hpp"
#include "painpoint/report.hpp"
#include "painpoint/summarizer.hpp"
#include "painpoint/summary.hpp"
#include "painpoint/synth.hpp"
