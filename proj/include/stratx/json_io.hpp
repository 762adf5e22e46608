#pragma once

#include <json.hpp>

#include "stratx/design.hpp"
#include "stratx/estimate.hpp"
#include "stratx/lasso.hpp"
#include "stratx/sim.hpp"

namespace stratx {

nlohmann::json to_json(const DesignResult& res);
nlohmann::json to_json(const LassoFit& fit);
nlohmann::json to_json(const EstimateReport& rep);
nlohmann::json to_json(const SummaryRow& row);
nlohmann::json cell_summary_json(const CellResult& cell);

// One-line CSV rendering of a report (header + line).
std::string report_csv(const EstimateReport& rep);

}  // namespace stratx
