#include "churn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "churn/error.hpp"
#include "churn/io.hpp"
#include "churn/random.hpp"

namespace churn {
namespace {

[[noreturn]] void config_error(const std::string& message) {
    throw Error(ErrorKind::configuration, "datagen", message);
}

constexpr const char* kSegments[] = {"SoHo", "SME", "LA"};
constexpr const char* kOffers[] = {"Basic", "Flex", "Pro", "Promo"};
constexpr const char* kActivationTypes[] = {"new", "portability", "renewal"};
constexpr const char* kTicketCategories[] = {"billing", "network", "handset"};
constexpr const char* kBrands[] = {"Apple", "Samsung", "Nokia", "Huawei", "Other"};

struct UsageStream {
    const char* service;
    const char* destination;
    double mean;  // units per month for a SoHo line
    double rate;      // charge per unit
    double adoption;  // share of lines that ever use the stream
};

constexpr UsageStream kUsage[] = {
    {"voice", "national", 45, 0.05, 1.0}, {"voice", "international", 3, 0.45, 0.35},
    {"sms", "national", 30, 0.04, 0.85},   {"sms", "international", 2, 0.2, 0.25},
    {"data", "internet", 1500, 0.002, 0.7},
};

constexpr double kSegmentAccountWeight[] = {1.0, 4.0, 16.0};
constexpr double kInactiveStay = 0.95;
constexpr double kInactiveEnter = 0.035;
constexpr double kTicketRate = 0.12;

double logit(double p) { return std::log(p / (1 - p)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double cents(double x) { return std::round(x * 100.0) / 100.0; }

Date day_in(Month m, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> day(1, 28);
    return Date{m.year(), m.month(), day(rng)};
}

Date month_date(Month m) { return Date{m.year(), m.month(), 0}; }

TableSchema table(std::string name, std::vector<FieldSchema> fields, std::string date_field = {}) {
    TableSchema t;
    t.name = std::move(name);
    t.role = TableRole::secondary;
    t.foreign_key = "customer_id";
    t.date_field = std::move(date_field);
    t.file = t.name + ".tsv";
    t.fields = std::move(fields);
    return t;
}

}  // namespace

const char* to_string(Preset preset) {
    switch (preset) {
        case Preset::planted: return "A";
        case Preset::noise: return "B";
        case Preset::drift: return "C";
    }
    return "?";
}

Preset parse_preset(std::string_view text) {
    if (text == "A" || text == "planted") {
        return Preset::planted;
    }
    if (text == "B" || text == "noise") {
        return Preset::noise;
    }
    if (text == "C" || text == "drift") {
        return Preset::drift;
    }
    config_error("unknown preset '" + std::string(text) + "' (use A, B or C)");
}

std::vector<Driver> default_drivers(Preset preset) {
    if (preset == Preset::noise) {
        return {};
    }
    return {{"inactive_last_month", 2.0},
            {"ticket_last_month", 1.8},
            {"short_tenure", 1.8},
            {"promo_offer", 1.8},
            {"large_account", -1.5}};
}

DatasetSchema generator_schema() {
    DatasetSchema schema;
    schema.root.name = "customer";
    schema.root.role = TableRole::root;
    schema.root.key_field = "customer_id";
    schema.root.file = "customer.tsv";
    schema.root.fields = {{"customer_id", FieldKind::identifier}, {"account_id", FieldKind::identifier},
                          {"segment", FieldKind::categorical},    {"offer", FieldKind::categorical},
                          {"activation_date", FieldKind::date},   {"activation_type", FieldKind::categorical},
                          {"bad_debt", FieldKind::flag}};
    schema.secondaries = {
        table("presence", {{"customer_id", FieldKind::identifier}, {"month", FieldKind::date}}, "month"),
        table("usage",
              {{"customer_id", FieldKind::identifier},
               {"date", FieldKind::date},
               {"service", FieldKind::categorical},
               {"destination", FieldKind::categorical},
               {"volume", FieldKind::numeric},
               {"charge", FieldKind::numeric}},
              "date"),
        table("tickets",
              {{"customer_id", FieldKind::identifier},
               {"date", FieldKind::date},
               {"category", FieldKind::categorical},
               {"resolved", FieldKind::flag}},
              "date"),
        table("revenue",
              {{"customer_id", FieldKind::identifier}, {"month", FieldKind::date}, {"amount", FieldKind::numeric}},
              "month"),
        table("handset", {{"customer_id", FieldKind::identifier}, {"brand", FieldKind::categorical}}),
    };
    return schema;
}

std::string driver_column() { return "Count(usage by Month(date)=lag0)"; }

std::string expert_formulas() {
    return "# Expert variables for the generated telecom dataset\n"
           "Count(usage)\n"
           "Count(usage by Month(date))\n"
           "Sum(usage, charge)\n"
           "Sum(usage, volume by Label(service))\n"
           "Count(usage by WeekDay(date), Label(service))\n"
           "Count(tickets)\n"
           "Count(tickets by Month(date))\n"
           "Sum(revenue, amount)\n"
           "Mode(handset, brand)\n";
}

GeneratedData generate(const GeneratorConfig& config) {
    if (config.n_customers == 0) {
        config_error("n_customers must be positive");
    }
    if (config.months < config.obs_months + config.latency_months + config.target_months + 1) {
        config_error("coverage of " + std::to_string(config.months) + " months is shorter than O+L+P+1 = " +
                     std::to_string(config.obs_months + config.latency_months + config.target_months + 1));
    }
    if (!(config.base_hazard > 0 && config.base_hazard < 1)) {
        config_error("base hazard must lie in (0,1)");
    }
    if (config.soho_share < 0 || config.sme_share < 0 || config.soho_share + config.sme_share > 1) {
        config_error("segment shares must be non-negative and sum to at most 1");
    }
    std::vector<Driver> drivers = config.drivers.empty() ? default_drivers(config.preset) : config.drivers;
    if (config.preset == Preset::noise) {
        drivers.clear();
    }
    double effect_inactive = 0, effect_ticket = 0, effect_tenure = 0, effect_promo = 0, effect_la = 0;
    for (const auto& d : drivers) {
        if (d.recipe == "inactive_last_month") {
            effect_inactive += d.effect;
        } else if (d.recipe == "ticket_last_month") {
            effect_ticket += d.effect;
        } else if (d.recipe == "short_tenure") {
            effect_tenure += d.effect;
        } else if (d.recipe == "promo_offer") {
            effect_promo += d.effect;
        } else if (d.recipe == "large_account") {
            effect_la += d.effect;
        } else {
            config_error("unknown driver recipe '" + d.recipe + "'");
        }
    }
    const Month first = config.first_month;
    const Month last = config.last_month();
    const Month drift = config.drift_month.value_or(last - (config.target_months - 1));
    const double base = logit(config.base_hazard);

    // Accounts.
    const std::size_t n_accounts = config.n_accounts > 0 ? config.n_accounts
                                                          : std::max<std::size_t>(1, config.n_customers / 4);
    auto account_rng = make_stream(config.seed, 0);
    std::discrete_distribution<int> segment_dist(
        {config.soho_share, config.sme_share, 1.0 - config.soho_share - config.sme_share});
    std::vector<int> account_segment(n_accounts);
    std::vector<double> account_weight(n_accounts);
    for (std::size_t a = 0; a < n_accounts; ++a) {
        account_segment[a] = segment_dist(account_rng);
        account_weight[a] = kSegmentAccountWeight[account_segment[a]];
    }
    std::discrete_distribution<std::size_t> account_dist(account_weight.begin(), account_weight.end());
    std::vector<std::size_t> customer_account(config.n_customers);
    for (std::size_t c = 0; c < config.n_customers; ++c) {
        // The first n_accounts customers seed one account each.
        customer_account[c] = c < n_accounts ? c : account_dist(account_rng);
    }
    auto account_id = [&](std::size_t a) {
        std::ostringstream s;
        s << "A" << std::setw(5) << std::setfill('0') << a + 1;
        return s.str();
    };

    DatasetSchema schema = generator_schema();
    TableData root(schema.root);
    std::vector<TableData> tables;
    for (const auto& t : schema.secondaries) {
        tables.emplace_back(t);
    }
    TableData& presence = tables[0];
    TableData& usage = tables[1];
    TableData& tickets = tables[2];
    TableData& revenue = tables[3];
    TableData& handset = tables[4];

    std::vector<CustomerTruth> all_truth;
    std::map<std::string, double> account_revenue;
    const Month activation_floor(2008, 1);
    const int history = first - activation_floor;

    for (std::size_t c = 0; c < config.n_customers; ++c) {
        auto rng = make_stream(config.seed, 1000 + c);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::ostringstream idstream;
        idstream << "C" << std::setw(6) << std::setfill('0') << c + 1;
        const std::string id = idstream.str();
        const std::size_t account = customer_account[c];
        const int segment = account_segment[account];
        const std::string offer = kOffers[std::uniform_int_distribution<int>(0, 3)(rng)];
        const std::string activation_type = kActivationTypes[std::uniform_int_distribution<int>(0, 2)(rng)];
        Month activation = unit(rng) < 0.85
                               ? activation_floor + std::uniform_int_distribution<int>(0, history - 1)(rng)
                               : first + std::uniform_int_distribution<int>(0, config.months - 3)(rng);
        const bool bad_debt = unit(rng) < config.bad_debt_rate;
        root.append_row(std::vector<Cell>{id, account_id(account), std::string(kSegments[segment]), offer,
                                          day_in(activation, rng), activation_type, bad_debt});
        handset.append_row(std::vector<Cell>{id, std::string(kBrands[std::uniform_int_distribution<int>(0, 4)(rng)])});

        CustomerTruth truth;
        truth.customer_id = id;
        truth.bad_debt = bad_debt;
        truth.hazard.assign(static_cast<std::size_t>(config.months), std::numeric_limits<double>::quiet_NaN());

        const double stationary_inactive = kInactiveEnter / (kInactiveEnter + 1 - kInactiveStay);
        bool inactive = unit(rng) < stationary_inactive;
        bool had_ticket = unit(rng) < kTicketRate;
        std::vector<bool> adopted;
        for (const auto& stream : kUsage) {
            adopted.push_back(unit(rng) < stream.adoption);
        }
        const Month start = std::max(first, activation);
        // Options and discounts spread the monthly fee around the offer's list price.
        const double list_price = offer == "Pro" ? 45 : offer == "Flex" ? 30 : offer == "Promo" ? 30 : 15;
        const double fee = cents(list_price * (0.6 + 0.8 * unit(rng)));
        for (Month m = start; m <= last; m = m + 1) {
            if (m > start) {
                const int tenure = m - activation;
                double effects = 0;
                effects += inactive ? effect_inactive : 0.0;
                effects += had_ticket ? effect_ticket : 0.0;
                effects += tenure < 12 ? effect_tenure : 0.0;
                effects += offer == "Promo" ? effect_promo : 0.0;
                effects += segment == 2 ? effect_la : 0.0;
                const bool drifted = config.preset == Preset::drift && m >= drift;
                const double x = drifted ? base - effects : base + effects;
                const double h = sigmoid(x);
                truth.hazard[static_cast<std::size_t>(m - first)] = h;
                if (unit(rng) < h) {
                    truth.churn_month = m;
                    break;
                }
                inactive = unit(rng) < (inactive ? kInactiveStay : kInactiveEnter);
            }
            presence.append_row(std::vector<Cell>{id, month_date(m)});
            double billed = fee;
            if (!inactive) {
                for (std::size_t u = 0; u < std::size(kUsage); ++u) {
                    if (!adopted[u]) {
                        continue;
                    }
                    const UsageStream& stream = kUsage[u];
                    const double k = 2.0;
                    std::negative_binomial_distribution<int> volume_dist(2, k / (k + stream.mean));
                    // Every active line places at least one national call.
                    const int volume = volume_dist(rng) + (u == 0 ? 1 : 0);
                    if (volume == 0) {
                        continue;
                    }
                    const double charge = cents(volume * stream.rate * (0.9 + 0.2 * unit(rng)));
                    billed += charge;
                    usage.append_row(std::vector<Cell>{id, day_in(m, rng), std::string(stream.service),
                                                       std::string(stream.destination),
                                                       static_cast<double>(volume), charge});
                }
            }
            had_ticket = unit(rng) < kTicketRate;
            if (had_ticket) {
                tickets.append_row(std::vector<Cell>{
                    id, day_in(m, rng), std::string(kTicketCategories[std::uniform_int_distribution<int>(0, 2)(rng)]),
                    unit(rng) < 0.8});
            }
            revenue.append_row(std::vector<Cell>{id, month_date(m), cents(billed)});
            account_revenue[account_id(account)] += cents(billed);
        }
        all_truth.push_back(std::move(truth));
    }
    for (auto& [id, amount] : account_revenue) {
        amount = cents(amount);
    }
    return GeneratedData{config, Dataset(std::move(schema), std::move(root), std::move(tables)),
                         std::move(all_truth), std::move(account_revenue)};
}

void write_generated(const GeneratedData& data, const std::filesystem::path& dir) {
    write_dataset(data.dataset, dir);
    const GeneratorConfig& config = data.config;
    std::ostringstream truth;
    std::vector<std::string> header{"customer_id", "churn_month", "bad_debt"};
    for (int m = 0; m < config.months; ++m) {
        header.push_back("hazard_" + (config.first_month + m).to_string());
    }
    io::write_record(truth, header, '\t');
    for (const auto& t : data.truth) {
        std::vector<std::string> record{t.customer_id, t.churn_month ? t.churn_month->to_string() : "",
                                        t.bad_debt ? "true" : "false"};
        for (double h : t.hazard) {
            record.push_back(std::isnan(h) ? "" : io::format_double(h));
        }
        io::write_record(truth, record, '\t');
    }
    io::write_atomic(dir / "truth.tsv", truth.str());

    std::ostringstream revenue;
    io::write_record(revenue, {"account_id", "revenue"}, '\t');
    for (const auto& [id, amount] : data.account_revenue) {
        io::write_record(revenue, {id, io::format_double(amount)}, '\t');
    }
    io::write_atomic(dir / "account_revenue.tsv", revenue.str());
    io::write_atomic(dir / "expert.txt", expert_formulas());

    nlohmann::ordered_json run;
    run["seed"] = config.seed;
    run["preset"] = to_string(config.preset);
    run["n_customers"] = config.n_customers;
    run["first_month"] = config.first_month.to_string();
    run["months"] = config.months;
    run["base_hazard"] = config.base_hazard;
    auto drivers = config.drivers.empty() ? default_drivers(config.preset) : config.drivers;
    if (config.preset == Preset::noise) {
        drivers.clear();
    }
    run["drivers"] = nlohmann::ordered_json::array();
    for (const auto& d : drivers) {
        run["drivers"].push_back({{"recipe", d.recipe}, {"effect", d.effect}});
    }
    if (config.preset == Preset::drift) {
        run["drift_month"] = config.drift_month.value_or(config.last_month() - (config.target_months - 1)).to_string();
    }
    run["default_anchor"] = config.default_anchor().to_string();
    run["driver_column"] = driver_column();
    io::write_atomic(dir / "run.json", run.dump(2) + "\n");
}

std::vector<CustomerTruth> read_truth(const std::filesystem::path& dir) {
    std::istringstream in(io::read_file(dir / "truth.tsv"));
    std::string line;
    std::getline(in, line);
    std::vector<CustomerTruth> out;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        auto fields = io::split_record(line, '\t');
        if (fields.size() < 3) {
            throw Error(ErrorKind::data, "datagen", "malformed truth row: " + line);
        }
        CustomerTruth t;
        t.customer_id = fields[0];
        if (!fields[1].empty()) {
            t.churn_month = Month::parse(fields[1]);
        }
        t.bad_debt = fields[2] == "true";
        for (std::size_t i = 3; i < fields.size(); ++i) {
            t.hazard.push_back(fields[i].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(fields[i]));
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::map<std::string, double> read_account_revenue(const std::filesystem::path& path) {
    std::istringstream in(io::read_file(path));
    std::string line;
    std::getline(in, line);
    std::map<std::string, double> out;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        auto fields = io::split_record(line, '\t');
        if (fields.size() != 2) {
            throw Error(ErrorKind::data, "datagen", "malformed revenue row: " + line);
        }
        try {
            out[fields[0]] = std::stod(fields[1]);
        } catch (const std::exception&) {
            throw Error(ErrorKind::data, "datagen", "bad revenue amount: " + line);
        }
    }
    return out;
}

}  // namespace churn
