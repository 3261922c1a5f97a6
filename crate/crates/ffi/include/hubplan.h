/* C interface to the hubplan multi-energy hub planning optimizer. */

#ifndef HUBPLAN_H
#define HUBPLAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call. Zero is success; anything else is an error whose
// message is readable through `hp_last_error`.
typedef enum HpStatus {
  // The call succeeded.
  HP_STATUS_OK = 0,
  // A required pointer argument was null.
  HP_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  HP_STATUS_INVALID_UTF8 = 2,
  // Input data failed to parse or validate.
  HP_STATUS_DATA = 3,
  // The request itself was malformed, e.g. an unknown framework id.
  HP_STATUS_USAGE = 4,
  // No plan can reach the requested emission target.
  HP_STATUS_UNREACHABLE = 5,
  // A solver budget ran out before the answer was proven.
  HP_STATUS_BUDGET = 6,
  // An internal invariant failed; the library state is still sound but
  // the call produced nothing.
  HP_STATUS_PANIC = 7,
} HpStatus;

// A validated hub together with its flow topology.
typedef struct HpHub HpHub;

// A solved framework run.
typedef struct HpResult HpResult;

// A reduced set of weighted typical days.
typedef struct HpScenarios HpScenarios;

// Horizon economics in plain C shape. Negative `emission_cap` means no
// cap; negative `carbon_price` means no externally imposed rate.
typedef struct HpEconomics {
  // Horizon length in years; everything is built in year zero.
  uint32_t years;
  // Annual discount rate on operating cash flows.
  double discount_rate;
  // Annual growth of traded prices.
  double fuel_growth;
  // Annual growth of demand.
  double demand_growth;
  // Emission ceiling per year in tonnes; negative for none.
  double emission_cap;
  // Imposed carbon rate in yen per tonne; negative for none.
  double carbon_price;
} HpEconomics;

// The headline figures of a solved run.
typedef struct HpSummary {
  // Investment cost, yen.
  double invest;
  // Discounted net operating cost, yen.
  double operate_npv;
  // Discounted carbon charges, yen.
  double tax_npv;
  // Investment plus both discounted streams, yen.
  double total;
  // Heaviest year's emissions, tonnes.
  double max_year_emissions;
  // Carbon rate the run settled on, yen per tonne; negative if none.
  double carbon_price;
  // Objective value of the defining solve.
  double objective;
  // Relative optimality gap of the defining solve.
  double gap;
  // Outer iterations spent: probes, cut rounds, or one.
  uint32_t iterations;
  // True when the run proved optimality within tolerance.
  bool optimal;
} HpSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version of the library as a static NUL-terminated string.
const char *hp_version(void);

// Message of the most recent failure on this thread. Never null; empty
// before the first failure. Valid until the next `hp_` call on the same
// thread.
const char *hp_last_error(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must have come from an `hp_` function documented to transfer
// ownership, and must not be used afterwards.
void hp_string_free(char *s);

// Parses and validates a hub description file (TOML). On success stores a
// new handle in `out`; free it with `hp_hub_free`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum HpStatus hp_hub_from_toml_file(const char *path, struct HpHub **out);

// Like `hp_hub_from_toml_file` but parsing an in-memory TOML string.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum HpStatus hp_hub_from_toml_str(const char *text, struct HpHub **out);

// Releases a hub handle. Null is ignored.
//
// # Safety
// `hub` must have come from this library and must not be used afterwards.
void hp_hub_free(struct HpHub *hub);

// Loads one CSV data series per name and reduces the year to
// `typical_days` weighted typical days. `names` and `paths` are parallel
// arrays of length `count`; each name is a carrier or a connection's
// series override, matching the hub the scenarios will be solved with.
// On success stores a new handle in `out`; free it with
// `hp_scenarios_free`.
//
// # Safety
// `names` and `paths` must point to `count` NUL-terminated strings each;
// `out` must be writable.
enum HpStatus hp_scenarios_load(const char *const *names,
                                const char *const *paths,
                                size_t count,
                                double dt_hours,
                                size_t typical_days,
                                uint64_t seed,
                                struct HpScenarios **out);

// Number of typical days in a scenario handle.
//
// # Safety
// `scenarios` must be a live handle from this library.
size_t hp_scenarios_day_count(const struct HpScenarios *scenarios);

// Releases a scenario handle. Null is ignored.
//
// # Safety
// `scenarios` must have come from this library and must not be used
// afterwards.
void hp_scenarios_free(struct HpScenarios *scenarios);

// The default horizon: twenty years at ten percent, prices growing two
// percent a year and demand four, no cap, no imposed rate.
struct HpEconomics hp_economics_default(void);

// Solves one framework — "f1", "f1-benders", "f2", "f3", or "f4" — for
// the given hub, scenarios, and economics. On success stores a new handle
// in `out`; free it with `hp_result_free`.
//
// # Safety
// All handles must be live handles from this library; `framework` must be
// a NUL-terminated string; `out` must be writable.
enum HpStatus hp_solve(const struct HpHub *hub,
                       const struct HpScenarios *scenarios,
                       const char *framework,
                       const struct HpEconomics *economics,
                       struct HpResult **out);

// Copies the headline figures of a solved run into `summary`.
//
// # Safety
// `result` must be a live handle from this library; `summary` must be
// writable.
enum HpStatus hp_result_summary(const struct HpResult *result, struct HpSummary *summary);

// Sizes of the solved plan's three device families: connections,
// converters, storages.
//
// # Safety
// `result` must be a live handle; the three out-pointers must be
// writable.
enum HpStatus hp_result_plan_counts(const struct HpResult *result,
                                    size_t *connections,
                                    size_t *converters,
                                    size_t *storages);

// Contracted capacity of connection `index`, megawatts.
//
// # Safety
// `result` must be a live handle; `out` must be writable.
enum HpStatus hp_result_connection_cap(const struct HpResult *result, size_t index, double *out);

// Installed units of converter `index`.
//
// # Safety
// `result` must be a live handle; `out` must be writable.
enum HpStatus hp_result_converter_units(const struct HpResult *result, size_t index, double *out);

// Power rating of storage `index`, megawatts.
//
// # Safety
// `result` must be a live handle; `out` must be writable.
enum HpStatus hp_result_storage_power(const struct HpResult *result, size_t index, double *out);

// Energy rating of storage `index`, megawatt hours.
//
// # Safety
// `result` must be a live handle; `out` must be writable.
enum HpStatus hp_result_storage_energy(const struct HpResult *result, size_t index, double *out);

// Serializes the full result to JSON. On success stores a newly allocated
// string in `out`; free it with `hp_string_free`.
//
// # Safety
// `result` must be a live handle; `out` must be writable.
enum HpStatus hp_result_to_json(const struct HpResult *result, char **out);

// Releases a result handle. Null is ignored.
//
// # Safety
// `result` must have come from this library and must not be used
// afterwards.
void hp_result_free(struct HpResult *result);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HUBPLAN_H */
