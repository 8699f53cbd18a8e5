#include "clvsurvey/survey.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "clvsurvey/error.hpp"
#include "clvsurvey/prob.hpp"
#include "clvsurvey/tabular.hpp"

namespace clvsurvey {

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool is_absent(std::string_view text) {
  const auto t = lower(trim(text));
  return t.empty() || t == "na" || t == "none" || t == "-";
}

struct CovariateField {
  const char* name;
  int levels;
  const std::vector<std::string>* labels;
  std::vector<std::pair<std::string, int>> aliases;
};

int parse_covariate(std::string_view text, const CovariateField& field, const std::string& where) {
  const auto t = trim(text);
  auto fail = [&](const std::string& why) -> int {
    std::ostringstream msg;
    msg << where << ": field '" << field.name << "' " << why;
    throw ValidationError(msg.str());
  };
  if (t.empty()) return fail("is empty");
  if (std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
    const auto code = parse_int(t, field.name);
    if (code < 1 || code > field.levels) {
      return fail("code " + std::string(t) + " out of range 1.." + std::to_string(field.levels));
    }
    return static_cast<int>(code);
  }
  const auto key = lower(t);
  for (std::size_t i = 0; i < field.labels->size(); ++i) {
    if (lower((*field.labels)[i]) == key) return static_cast<int>(i) + 1;
  }
  for (const auto& [alias, code] : field.aliases) {
    if (alias == key) return code;
  }
  return fail("has unknown label '" + std::string(t) + "'");
}

const CovariateField& agegr_field() {
  static const CovariateField f{"agegr", kAgeGroups, &agegr_labels(), {{"45-55", 4}}};
  return f;
}
const CovariateField& gender_field() {
  static const CovariateField f{
      "gender", kGenders, &gender_labels(), {{"man", 1}, {"male", 1}, {"woman", 2}, {"female", 2}, {"w", 2}}};
  return f;
}
const CovariateField& incomegr_field() {
  static const CovariateField f{
      "incomegr", kIncomeGroups, &incomegr_labels(), {{"0-30k", 1}, {"70k-", 4}, {"na", 5}, {"n/a", 5}}};
  return f;
}
const CovariateField& region_field() {
  static const CovariateField f{"region",
                                kRegions,
                                &region_labels(),
                                {{"helsinki", 1},
                                 {"uusimaa", 1},
                                 {"northern-eastern", 4},
                                 {"eastern & northern", 4},
                                 {"northern and eastern", 4},
                                 {"eastern", 4},
                                 {"northern", 4}}};
  return f;
}

std::string_view block_name(RecordBlock b) {
  switch (b) {
    case RecordBlock::retained: return "retained";
    case RecordBlock::churned: return "churned";
    case RecordBlock::interval_only: return "interval_only";
  }
  return "interval_only";
}

RecordBlock parse_block(std::string_view text) {
  if (text == "retained") return RecordBlock::retained;
  if (text == "churned") return RecordBlock::churned;
  if (text == "interval_only") return RecordBlock::interval_only;
  throw ValidationError("unknown record block '" + std::string(text) + "'");
}

std::string optional_int(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("NA"); }

std::optional<int> parse_optional_int(std::string_view text, std::string_view what) {
  if (is_absent(text)) return std::nullopt;
  return static_cast<int>(parse_int(text, what));
}

}  // namespace

// ---------------------------------------------------------------- catalogs

BrandCatalog::BrandCatalog(std::vector<std::string> labels) {
  if (labels.size() < 2) throw ValidationError("brand catalog needs at least two brands");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (lower(labels[i]) == lower(labels[j])) throw ValidationError("duplicate brand label '" + labels[i] + "'");
    }
    brands_.push_back(Brand{static_cast<int>(i) + 1, labels[i]});
  }
}

BrandCatalog BrandCatalog::mobile_default() { return BrandCatalog({"Nokia", "Apple", "Samsung", "Other"}); }

const std::string& BrandCatalog::label(int id) const {
  if (id < 1 || id > size()) throw ValidationError("brand id " + std::to_string(id) + " outside catalog");
  return brands_[static_cast<std::size_t>(id - 1)].label;
}

std::optional<int> BrandCatalog::find(std::string_view label) const {
  const auto key = lower(trim(label));
  for (const auto& b : brands_) {
    if (lower(b.label) == key) return b.id;
  }
  return std::nullopt;
}

int BrandCatalog::id_of(std::string_view label) const { return find(label).value_or(other_id()); }

bool BrandCatalog::operator==(const BrandCatalog& rhs) const {
  if (brands_.size() != rhs.brands_.size()) return false;
  for (std::size_t i = 0; i < brands_.size(); ++i) {
    if (brands_[i].label != rhs.brands_[i].label) return false;
  }
  return true;
}

const std::vector<std::string>& agegr_labels() {
  static const std::vector<std::string> v{"15-24", "25-34", "35-44", "45-54", "55-64", "65-79"};
  return v;
}
const std::vector<std::string>& gender_labels() {
  static const std::vector<std::string> v{"M", "F"};
  return v;
}
const std::vector<std::string>& incomegr_labels() {
  static const std::vector<std::string> v{"<30k", "30-50k", "50-70k", "70k+", "unknown"};
  return v;
}
const std::vector<std::string>& region_labels() {
  static const std::vector<std::string> v{"Helsinki-Uusimaa", "Southern", "Western", "Eastern-Northern"};
  return v;
}

// ---------------------------------------------------------------- dates

CalendarMonth CalendarMonth::parse(std::string_view text) {
  text = trim(text);
  const auto dash = text.find('-');
  if (dash == std::string_view::npos) throw ValidationError("survey date must be YYYY-MM, got '" + std::string(text) + "'");
  const auto year = parse_int(text.substr(0, dash), "survey year");
  const auto month = parse_int(text.substr(dash + 1), "survey month");
  if (month < 1 || month > 12) throw ValidationError("survey month out of range in '" + std::string(text) + "'");
  return CalendarMonth{static_cast<int>(year), static_cast<int>(month)};
}

std::string CalendarMonth::to_string() const {
  std::ostringstream out;
  out << year << '-' << (month < 10 ? "0" : "") << month;
  return out.str();
}

DateAnswer DateAnswer::of_month(int year, int month) {
  if (month < 1 || month > 12) throw ValidationError("month out of range");
  return DateAnswer{Granularity::month, year, month, std::nullopt};
}
DateAnswer DateAnswer::of_season(int year, Season season) {
  return DateAnswer{Granularity::season, year, std::nullopt, season};
}
DateAnswer DateAnswer::of_year(int year) { return DateAnswer{Granularity::year, year, std::nullopt, std::nullopt}; }
DateAnswer DateAnswer::unknown() { return DateAnswer{}; }

DateAnswer DateAnswer::parse(std::string_view text) {
  text = trim(text);
  if (text == "??" || text.empty()) return unknown();
  const auto dash = text.find('-');
  if (dash == std::string_view::npos) throw ValidationError("malformed date '" + std::string(text) + "'");
  const auto year = static_cast<int>(parse_int(text.substr(0, dash), "date year"));
  const auto rest = text.substr(dash + 1);
  if (rest == "??") return of_year(year);
  if (rest.size() == 2 && (rest[0] == 'Q' || rest[0] == 'q')) {
    switch (std::toupper(static_cast<unsigned char>(rest[1]))) {
      case 'W': return of_season(year, Season::winter);
      case 'P': return of_season(year, Season::spring);
      case 'S': return of_season(year, Season::summer);
      case 'A': return of_season(year, Season::autumn);
      default: break;
    }
    throw ValidationError("unknown season code in '" + std::string(text) + "'");
  }
  const auto month = parse_int(rest, "date month");
  if (month < 1 || month > 12) throw ValidationError("month out of range in '" + std::string(text) + "'");
  return of_month(year, static_cast<int>(month));
}

std::string DateAnswer::to_string() const {
  std::ostringstream out;
  switch (granularity) {
    case Granularity::unknown: return "??";
    case Granularity::year: out << *year << "-??"; break;
    case Granularity::month: out << *year << '-' << (*month < 10 ? "0" : "") << *month; break;
    case Granularity::season: {
      static constexpr char codes[] = {'W', 'P', 'S', 'A'};
      out << *year << "-Q" << codes[static_cast<int>(*season)];
      break;
    }
  }
  return out.str();
}

std::pair<int, int> DateAnswer::month_range() const {
  switch (granularity) {
    case Granularity::month: {
      const int idx = CalendarMonth{*year, *month}.index();
      return {idx, idx};
    }
    case Granularity::season: {
      // Season start months: winter=Dec of previous year, spring=Mar, summer=Jun, autumn=Sep.
      const int first = *year * 12 + 3 * static_cast<int>(*season) - 1;
      return {first, first + 2};
    }
    case Granularity::year: return {*year * 12, *year * 12 + 11};
    case Granularity::unknown: break;
  }
  throw ValidationError("unknown date has no month range");
}

ElapsedBounds date_bounds(const DateAnswer& answer, CalendarMonth survey_date) {
  if (answer.granularity == Granularity::unknown) return ElapsedBounds{0.0, kMaxIntervalMonths};
  const int survey = survey_date.index();
  auto [first, last] = answer.month_range();
  if (first > survey) {
    throw ValidationError("purchase date " + answer.to_string() + " lies after survey date " + survey_date.to_string());
  }
  last = std::min(last, survey);
  return ElapsedBounds{static_cast<double>(survey - last), static_cast<double>(survey - first + 1)};
}

bool CensoredInterval::right_censored() const noexcept { return std::isinf(t_max); }

IntervalOutcome build_interval(const DateAnswer& current, const DateAnswer& previous, CalendarMonth survey_date) {
  // Validates both answers against the survey date.
  (void)date_bounds(current, survey_date);
  (void)date_bounds(previous, survey_date);

  IntervalOutcome out;
  if (current.granularity == Granularity::unknown || previous.granularity == Granularity::unknown) {
    out.interval = CensoredInterval{0.0, kMaxIntervalMonths};
    return out;
  }
  const int survey = survey_date.index();
  auto [c_first, c_last] = current.month_range();
  auto [p_first, p_last] = previous.month_range();
  c_last = std::min(c_last, survey);
  p_last = std::min(p_last, survey);

  const double raw_min = c_first - p_last;
  const double raw_max = c_last - p_first;
  double t_min = std::max(0.0, raw_min);
  double t_max = std::min(kMaxIntervalMonths, raw_max);
  if (raw_max < 0.0) out.clamped = true;
  // A repurchase within the same calendar month still has positive length.
  if (t_max < 1.0) t_max = 1.0;
  if (t_min > t_max) {
    t_min = t_max;
    out.clamped = true;
  }
  if (t_min == t_max) t_min = t_max - kZeroWidthGuardMonths;
  out.interval = CensoredInterval{t_min, t_max};
  return out;
}

Variant parse_variant(std::string_view text) {
  const auto t = lower(trim(text));
  if (t == "historical") return Variant::historical;
  if (t == "intended") return Variant::intended;
  throw ValidationError("variant must be 'historical' or 'intended', got '" + std::string(text) + "'");
}

std::string_view to_string(Variant v) noexcept { return v == Variant::historical ? "historical" : "intended"; }

// ---------------------------------------------------------------- dataset

ModelDataset build_dataset(std::span<const Respondent> respondents, Variant variant, CalendarMonth survey_date,
                           const BrandCatalog& brands) {
  if (respondents.empty()) throw ValidationError("cannot build a dataset from zero respondents");

  ModelDataset ds;
  ds.brands = brands;
  ds.variant = variant;
  ds.survey_date = survey_date;

  std::vector<ModelRecord> retained, churned, interval_only;
  std::size_t intended_answers = 0;

  for (std::size_t i = 0; i < respondents.size(); ++i) {
    const Respondent& r = respondents[i];
    const ElapsedBounds elapsed = date_bounds(r.current_purchase, survey_date);
    const bool unknown_current = r.current_purchase.granularity == Granularity::unknown;
    ds.individuals.push_back(SurveyIndividual{r.current_brand, r.covariates, elapsed, unknown_current});
    if (unknown_current) ++ds.report.unknown_current_date;

    const IntervalOutcome iv = build_interval(r.current_purchase, r.previous_purchase, survey_date);
    if (iv.clamped) ++ds.report.clamped_intervals;

    ModelRecord rec;
    rec.interval = iv.interval;
    rec.covariates = r.covariates;
    rec.respondent = i;
    if (r.previous_brand) {
      rec.prev_brand = *r.previous_brand;
      const bool same = r.current_brand == *r.previous_brand;
      rec.repurchase = same ? 1 : 0;
      if (!same) rec.new_brand = r.current_brand;
      rec.block = same ? RecordBlock::retained : RecordBlock::churned;
      (same ? retained : churned).push_back(rec);
    } else if (iv.interval.t_max < kMaxIntervalMonths) {
      // Transition unusable, interval still informative.
      rec.prev_brand = brands.other_id();
      rec.block = RecordBlock::interval_only;
      interval_only.push_back(rec);
    } else {
      ++ds.report.dropped_respondents;
    }

    if (variant == Variant::intended && r.intended_brand) {
      ++intended_answers;
      ModelRecord next;
      next.interval = CensoredInterval{elapsed.earliest, kInf};
      next.covariates = r.covariates;
      next.prev_brand = r.current_brand;
      next.respondent = i;
      const bool same = *r.intended_brand == r.current_brand;
      next.repurchase = same ? 1 : 0;
      if (!same) next.new_brand = *r.intended_brand;
      next.block = same ? RecordBlock::retained : RecordBlock::churned;
      (same ? retained : churned).push_back(next);
    }
  }
  if (variant == Variant::intended && intended_answers == 0) {
    throw ValidationError("intended variant requested but no respondent gave an intended brand");
  }
  ds.report.intended_records = intended_answers;

  ds.n_retained = retained.size();
  ds.n_churned = churned.size();
  ds.n_interval_only = interval_only.size();
  ds.records.reserve(retained.size() + churned.size() + interval_only.size());
  for (auto* block : {&retained, &churned, &interval_only}) {
    ds.records.insert(ds.records.end(), block->begin(), block->end());
  }
  return ds;
}

// ---------------------------------------------------------------- survey CSV

std::vector<Respondent> parse_survey(std::istream& in, const BrandCatalog& brands) {
  std::vector<Respondent> out;
  std::string line;
  std::size_t line_no = 0;
  if (!next_data_line(in, line, &line_no)) return out;

  const auto header = split_csv_line(line);
  const ColumnIndex cols(header);
  const std::size_t c_brand = cols.require("current_brand");
  const std::size_t c_date = cols.require("current_date");
  const std::size_t p_brand = cols.require("previous_brand");
  const std::size_t p_date = cols.require("previous_date");
  const std::size_t i_brand = cols.require("intended_brand");
  const std::size_t c_age = cols.require("agegr");
  const std::size_t c_gender = cols.require("gender");
  const std::size_t c_income = cols.require("incomegr");
  const std::size_t c_region = cols.require("region");

  std::size_t row = 0;
  while (next_data_line(in, line, &line_no)) {
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "row " << row << " (line " << line_no << "): expected " << header.size() << " fields, found "
          << fields.size();
      throw ValidationError(msg.str());
    }
    const std::string where = "row " + std::to_string(row) + " (line " + std::to_string(line_no) + ")";
    Respondent r;
    try {
      if (is_absent(fields[c_brand])) throw ValidationError("current_brand is empty");
      r.current_brand = brands.id_of(fields[c_brand]);
      if (!is_absent(fields[p_brand])) r.previous_brand = brands.id_of(fields[p_brand]);
      if (!is_absent(fields[i_brand])) r.intended_brand = brands.id_of(fields[i_brand]);
      r.current_purchase = DateAnswer::parse(fields[c_date]);
      r.previous_purchase = DateAnswer::parse(fields[p_date]);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    r.covariates.agegr = parse_covariate(fields[c_age], agegr_field(), where);
    r.covariates.gender = parse_covariate(fields[c_gender], gender_field(), where);
    r.covariates.incomegr = parse_covariate(fields[c_income], incomegr_field(), where);
    r.covariates.region = parse_covariate(fields[c_region], region_field(), where);
    out.push_back(std::move(r));
  }
  return out;
}

void write_survey(std::ostream& out, std::span<const Respondent> respondents, const BrandCatalog& brands) {
  out << "current_brand,current_date,previous_brand,previous_date,intended_brand,agegr,gender,incomegr,region\n";
  for (const auto& r : respondents) {
    out << brands.label(r.current_brand) << ',' << r.current_purchase.to_string() << ','
        << (r.previous_brand ? brands.label(*r.previous_brand) : std::string()) << ','
        << r.previous_purchase.to_string() << ','
        << (r.intended_brand ? brands.label(*r.intended_brand) : std::string()) << ','
        << agegr_labels()[r.covariates.agegr - 1] << ',' << gender_labels()[r.covariates.gender - 1] << ','
        << incomegr_labels()[r.covariates.incomegr - 1] << ',' << region_labels()[r.covariates.region - 1] << '\n';
  }
}

// ---------------------------------------------------------------- dataset file

void write_dataset(std::ostream& out, const ModelDataset& ds) {
  out << "format,clvsurvey-dataset,1\n";
  out << "brands";
  for (const auto& b : ds.brands.brands()) out << ',' << b.label;
  out << '\n';
  out << "variant," << to_string(ds.variant) << '\n';
  out << "survey_date," << ds.survey_date.to_string() << '\n';
  out << "partition," << ds.n_retained << ',' << ds.n_churned << ',' << ds.n_interval_only << '\n';
  out << "report," << ds.report.clamped_intervals << ',' << ds.report.dropped_respondents << ','
      << ds.report.unknown_current_date << ',' << ds.report.intended_records << '\n';
  out << "records," << ds.records.size() << '\n';
  out << "block,t_min,t_max,prev_brand,agegr,gender,incomegr,region,repurchase,new_brand,respondent\n";
  for (const auto& r : ds.records) {
    out << block_name(r.block) << ',' << format_double(r.interval.t_min) << ',' << format_double(r.interval.t_max)
        << ',' << r.prev_brand << ',' << r.covariates.agegr << ',' << r.covariates.gender << ','
        << r.covariates.incomegr << ',' << r.covariates.region << ',' << optional_int(r.repurchase) << ','
        << optional_int(r.new_brand) << ',' << r.respondent << '\n';
  }
  out << "individuals," << ds.individuals.size() << '\n';
  out << "current_brand,agegr,gender,incomegr,region,elapsed_earliest,elapsed_latest,current_date_unknown\n";
  for (const auto& ind : ds.individuals) {
    out << ind.current_brand << ',' << ind.covariates.agegr << ',' << ind.covariates.gender << ','
        << ind.covariates.incomegr << ',' << ind.covariates.region << ',' << format_double(ind.elapsed.earliest) << ','
        << format_double(ind.elapsed.latest) << ',' << (ind.current_date_unknown ? 1 : 0) << '\n';
  }
}

ModelDataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](std::string_view expect_key) {
    if (!next_data_line(in, line, &line_no)) {
      throw ValidationError("dataset file truncated before '" + std::string(expect_key) + "'");
    }
    auto f = split_csv_line(line);
    if (!expect_key.empty() && f.front() != expect_key) {
      throw ValidationError("dataset line " + std::to_string(line_no) + ": expected '" + std::string(expect_key) +
                            "', found '" + f.front() + "'");
    }
    return f;
  };
  auto as_size = [](const std::string& s, std::string_view what) {
    const auto v = parse_int(s, what);
    if (v < 0) throw ValidationError("negative count for " + std::string(what));
    return static_cast<std::size_t>(v);
  };

  auto f = next("format");
  if (f.size() != 3 || f[1] != "clvsurvey-dataset" || f[2] != "1") throw ValidationError("unsupported dataset format");

  f = next("brands");
  ModelDataset ds;
  ds.brands = BrandCatalog(std::vector<std::string>(f.begin() + 1, f.end()));
  f = next("variant");
  ds.variant = parse_variant(f.at(1));
  f = next("survey_date");
  ds.survey_date = CalendarMonth::parse(f.at(1));
  f = next("partition");
  if (f.size() != 4) throw ValidationError("partition line needs three counts");
  ds.n_retained = as_size(f[1], "n_retained");
  ds.n_churned = as_size(f[2], "n_churned");
  ds.n_interval_only = as_size(f[3], "n_interval_only");
  f = next("report");
  if (f.size() != 5) throw ValidationError("report line needs four counts");
  ds.report = DatasetReport{as_size(f[1], "clamped"), as_size(f[2], "dropped"), as_size(f[3], "unknown_current"),
                            as_size(f[4], "intended")};

  f = next("records");
  const std::size_t n_records = as_size(f.at(1), "records");
  (void)next("block");
  for (std::size_t i = 0; i < n_records; ++i) {
    f = next("");
    if (f.size() != 11) throw ValidationError("dataset line " + std::to_string(line_no) + ": expected 11 fields");
    ModelRecord r;
    r.block = parse_block(f[0]);
    r.interval = CensoredInterval{parse_double(f[1], "t_min"), parse_double(f[2], "t_max")};
    r.prev_brand = static_cast<int>(parse_int(f[3], "prev_brand"));
    r.covariates = Covariates{static_cast<int>(parse_int(f[4], "agegr")), static_cast<int>(parse_int(f[5], "gender")),
                              static_cast<int>(parse_int(f[6], "incomegr")),
                              static_cast<int>(parse_int(f[7], "region"))};
    r.repurchase = parse_optional_int(f[8], "repurchase");
    r.new_brand = parse_optional_int(f[9], "new_brand");
    r.respondent = as_size(f[10], "respondent");
    ds.records.push_back(r);
  }
  if (ds.n_retained + ds.n_churned + ds.n_interval_only != ds.records.size()) {
    throw ValidationError("dataset partition sizes do not sum to the record count");
  }

  f = next("individuals");
  const std::size_t n_ind = as_size(f.at(1), "individuals");
  (void)next("current_brand");
  for (std::size_t i = 0; i < n_ind; ++i) {
    f = next("");
    if (f.size() != 8) throw ValidationError("dataset line " + std::to_string(line_no) + ": expected 8 fields");
    SurveyIndividual ind;
    ind.current_brand = static_cast<int>(parse_int(f[0], "current_brand"));
    ind.covariates = Covariates{static_cast<int>(parse_int(f[1], "agegr")), static_cast<int>(parse_int(f[2], "gender")),
                                static_cast<int>(parse_int(f[3], "incomegr")),
                                static_cast<int>(parse_int(f[4], "region"))};
    ind.elapsed = ElapsedBounds{parse_double(f[5], "elapsed_earliest"), parse_double(f[6], "elapsed_latest")};
    ind.current_date_unknown = parse_int(f[7], "current_date_unknown") != 0;
    ds.individuals.push_back(ind);
  }
  return ds;
}

}  // namespace clvsurvey
