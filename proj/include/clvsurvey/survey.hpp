#pragma once

// Survey data model: brands, recalled purchase dates, interval-censored
// purchase intervals and the record layout consumed by the mobile model.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clvsurvey {

/// Longest purchase interval (months). Also the window assumed for an
/// unrecalled purchase date.
inline constexpr double kMaxIntervalMonths = 200.0;
/// Width kept when clamping would collapse an interval to a point.
inline constexpr double kZeroWidthGuardMonths = 0.01;

struct Brand {
  int id;  // 1-based, contiguous
  std::string label;
};

/// Ordered brand list. The last entry is the catch-all "Other" used for
/// labels outside the catalog.
class BrandCatalog {
 public:
  explicit BrandCatalog(std::vector<std::string> labels);
  static BrandCatalog mobile_default();  // Nokia, Apple, Samsung, Other

  int size() const noexcept { return static_cast<int>(brands_.size()); }
  const std::string& label(int id) const;
  /// Maps a label to its id; unknown labels map to the catch-all brand.
  int id_of(std::string_view label) const;
  std::optional<int> find(std::string_view label) const;
  int other_id() const noexcept { return size(); }
  std::span<const Brand> brands() const noexcept { return brands_; }

  bool operator==(const BrandCatalog& rhs) const;

 private:
  std::vector<Brand> brands_;
};

enum class Granularity { month, season, year, unknown };
enum class Season { winter, spring, summer, autumn };

struct CalendarMonth {
  int year;
  int month;  // 1..12

  int index() const noexcept { return year * 12 + (month - 1); }
  static CalendarMonth parse(std::string_view text);  // YYYY-MM
  std::string to_string() const;
  bool operator==(const CalendarMonth&) const = default;
};

/// A recalled purchase date at whatever resolution the respondent managed.
struct DateAnswer {
  Granularity granularity = Granularity::unknown;
  std::optional<int> year;
  std::optional<int> month;
  std::optional<Season> season;

  static DateAnswer of_month(int year, int month);
  static DateAnswer of_season(int year, Season season);
  static DateAnswer of_year(int year);
  static DateAnswer unknown();

  /// Accepts YYYY-MM, YYYY-Qs (s in W,P,S,A), YYYY-?? and ??.
  static DateAnswer parse(std::string_view text);
  std::string to_string() const;

  /// Inclusive range of calendar month indices the answer covers.
  /// Seasons are three contiguous months; winter of year Y is Dec(Y-1)..Feb(Y).
  std::pair<int, int> month_range() const;

  bool operator==(const DateAnswer&) const = default;
};

/// Purchase interval bounds in months. t_max is +infinity for right censoring.
struct CensoredInterval {
  double t_min = 0.0;
  double t_max = 0.0;

  bool right_censored() const noexcept;
  bool operator==(const CensoredInterval&) const = default;
};

/// Static covariate codes, all 1-based.
struct Covariates {
  int agegr = 1;     // 1..6
  int gender = 1;    // 1..2
  int incomegr = 1;  // 1..5
  int region = 1;    // 1..4

  bool operator==(const Covariates&) const = default;
};

inline constexpr int kAgeGroups = 6;
inline constexpr int kGenders = 2;
inline constexpr int kIncomeGroups = 5;
inline constexpr int kRegions = 4;

const std::vector<std::string>& agegr_labels();
const std::vector<std::string>& gender_labels();
const std::vector<std::string>& incomegr_labels();
const std::vector<std::string>& region_labels();

struct Respondent {
  int current_brand = 1;
  std::optional<int> previous_brand;
  std::optional<int> intended_brand;
  DateAnswer current_purchase;
  DateAnswer previous_purchase;
  Covariates covariates;

  bool operator==(const Respondent&) const = default;
};

/// Elapsed months between a purchase and the end of the survey month.
struct ElapsedBounds {
  double earliest;  // smallest elapsed time (most recent possible purchase)
  double latest;

  double midpoint() const noexcept { return 0.5 * (earliest + latest); }
  bool operator==(const ElapsedBounds&) const = default;
};

ElapsedBounds date_bounds(const DateAnswer& answer, CalendarMonth survey_date);

struct IntervalOutcome {
  CensoredInterval interval;
  bool clamped = false;  // answers were mutually inconsistent
};

/// Purchase interval between the previous and the current purchase.
///
/// Bounds are month-index differences: t_min = first month of the current
/// window minus last month of the previous window, t_max = last current
/// month minus first previous month. An unrecalled date gives t_max = 200.
/// A same-month pair yields [0, 1]; a point interval [d, d] is widened to
/// [d - 0.01, d].
IntervalOutcome build_interval(const DateAnswer& current, const DateAnswer& previous, CalendarMonth survey_date);

enum class Variant { historical, intended };
Variant parse_variant(std::string_view text);
std::string_view to_string(Variant v) noexcept;

enum class RecordBlock { retained, churned, interval_only };

/// One row of the model likelihood.
struct ModelRecord {
  RecordBlock block = RecordBlock::interval_only;
  CensoredInterval interval;  // months
  Covariates covariates;
  int prev_brand = 1;  // brand covariate for the modelled transition
  std::optional<int> repurchase;
  std::optional<int> new_brand;
  std::size_t respondent = 0;

  bool operator==(const ModelRecord&) const = default;
};

/// Respondent-level state needed to project purchases forward.
struct SurveyIndividual {
  int current_brand = 1;
  Covariates covariates;
  ElapsedBounds elapsed{0.0, 0.0};  // months since current purchase
  bool current_date_unknown = false;

  bool operator==(const SurveyIndividual&) const = default;
};

struct DatasetReport {
  std::size_t clamped_intervals = 0;
  std::size_t dropped_respondents = 0;
  std::size_t unknown_current_date = 0;
  std::size_t intended_records = 0;

  bool operator==(const DatasetReport&) const = default;
};

/// Records ordered retained, churned, interval-only.
struct ModelDataset {
  BrandCatalog brands = BrandCatalog::mobile_default();
  Variant variant = Variant::historical;
  CalendarMonth survey_date{2013, 2};
  std::vector<ModelRecord> records;
  std::vector<SurveyIndividual> individuals;
  std::size_t n_retained = 0;
  std::size_t n_churned = 0;
  std::size_t n_interval_only = 0;
  DatasetReport report;

  std::size_t n_transitions() const noexcept { return n_retained + n_churned; }
};

ModelDataset build_dataset(std::span<const Respondent> respondents, Variant variant, CalendarMonth survey_date,
                           const BrandCatalog& brands);

// ---------------------------------------------------------------- file I/O

/// Reads the survey CSV. Columns are located by header name; extra columns
/// are ignored. Covariates accept either numeric codes or catalog labels.
std::vector<Respondent> parse_survey(std::istream& in, const BrandCatalog& brands);
void write_survey(std::ostream& out, std::span<const Respondent> respondents, const BrandCatalog& brands);

/// Canonical dataset text format. Values are written in shortest round-trip
/// form so read_dataset(write_dataset(d)) reproduces d exactly.
void write_dataset(std::ostream& out, const ModelDataset& dataset);
ModelDataset read_dataset(std::istream& in);

}  // namespace clvsurvey
