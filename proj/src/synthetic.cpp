#include "slu/synthetic.hpp"

#include "slu/random.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace slu {

namespace {

using Lexicon = std::vector<std::string>;  // entries may hold several space-separated tokens

const std::map<std::string, Lexicon>& lexicons() {
  static const std::map<std::string, Lexicon> lex = {
      {"city",
       {"boston", "denver", "atlanta", "dallas", "pittsburgh", "baltimore", "philadelphia", "san francisco",
        "new york", "washington", "oakland", "seattle", "chicago", "miami", "houston", "phoenix", "detroit",
        "cleveland", "memphis", "nashville", "orlando", "tampa", "toronto", "montreal", "salt lake city",
        "las vegas", "los angeles", "san diego", "san jose", "st. louis", "kansas city", "milwaukee",
        "minneapolis", "charlotte", "columbus", "indianapolis", "cincinnati", "newark", "ontario", "burbank",
        "long beach", "fort worth", "st. petersburg", "westchester county", "tacoma", "portland", "austin",
        "new orleans"}},
      {"airline",
       {"delta", "united", "american airlines", "us air", "continental", "northwest", "twa", "america west",
        "alaska airlines", "lufthansa", "midwest express", "canadian airlines", "nationair", "tower air"}},
      {"day", {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"}},
      {"period", {"morning", "afternoon", "evening", "night", "early morning"}},
      {"month",
       {"january", "february", "march", "april", "may", "june", "july", "august", "september", "october",
        "november", "december"}},
      {"day_number",
       {"first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth", "eleventh",
        "twelfth", "fifteenth", "twentieth", "twenty first", "twenty second", "thirtieth"}},
      {"meal", {"breakfast", "lunch", "dinner", "snack", "meals"}},
      {"class", {"first class", "coach", "business class", "economy"}},
      {"transport", {"limousine", "taxi", "rental car", "bus", "air taxi operation"}},
      {"aircraft", {"boeing 767", "dc10", "m80", "737", "airbus", "turboprop", "jet"}},
      {"fare_code", {"qx", "qw", "fn", "yn", "bh", "m"}},
  };
  return lex;
}

struct Template {
  std::string intent;
  std::string pattern;  // words and {slot:lexicon} placeholders
};

const std::vector<Template>& templates() {
  static const std::vector<Template> t = {
      {"flight", "show me flights from {fromloc.city_name:city} to {toloc.city_name:city}"},
      {"flight", "i need a flight from {fromloc.city_name:city} to {toloc.city_name:city} on {depart_date.day_name:day}"},
      {"flight", "flights on {airline_name:airline} from {fromloc.city_name:city} to {toloc.city_name:city}"},
      {"flight", "flights on {depart_date.day_name:day} from {fromloc.city_name:city} to {toloc.city_name:city}"},
      {"flight", "list flights to {toloc.city_name:city} on {depart_date.month_name:month} {depart_date.day_number:day_number}"},
      {"flight",
       "what flights leave {fromloc.city_name:city} in the {depart_time.period_of_day:period} and arrive in "
       "{toloc.city_name:city} in the {arrive_time.period_of_day:period}"},
      {"flight", "i would like to fly {airline_name:airline} to {toloc.city_name:city} {depart_time.period_of_day:period}"},
      {"flight", "is there a {class_type:class} flight from {fromloc.city_name:city} to {toloc.city_name:city}"},
      {"flight", "{fromloc.city_name:city} to {toloc.city_name:city} {depart_date.day_name:day}"},
      {"airfare", "how much is a {class_type:class} ticket from {fromloc.city_name:city} to {toloc.city_name:city}"},
      {"airfare", "what is the cheapest fare to {toloc.city_name:city} on {airline_name:airline}"},
      {"airfare", "fares from {fromloc.city_name:city} on {depart_date.day_name:day}"},
      {"airfare", "show me the {class_type:class} fares on {airline_name:airline}"},
      {"ground_service", "what ground transportation is there in {city_name:city}"},
      {"ground_service", "is there a {transport_type:transport} in {city_name:city}"},
      {"ground_service", "how do i get from the airport to downtown {city_name:city} by {transport_type:transport}"},
      {"airline", "which airlines fly from {fromloc.city_name:city} to {toloc.city_name:city}"},
      {"airline", "what airlines serve {city_name:city}"},
      {"airline", "is {airline_name:airline} flying to {toloc.city_name:city} on {depart_date.day_name:day}"},
      {"meal", "what {meal_description:meal} is served on flights from {fromloc.city_name:city} to {toloc.city_name:city}"},
      {"meal", "is {meal_description:meal} served on {airline_name:airline}"},
      {"aircraft", "what type of aircraft is the {aircraft_code:aircraft}"},
      {"aircraft", "which flights to {toloc.city_name:city} use a {aircraft_code:aircraft}"},
      {"abbreviation", "what does fare code {fare_basis_code:fare_code} mean"},
      {"abbreviation", "what is {fare_basis_code:fare_code}"},
      {"distance", "how far is {fromloc.city_name:city} from {toloc.city_name:city}"},
      {"flight_time", "what time does the flight from {fromloc.city_name:city} to {toloc.city_name:city} leave"},
      {"flight_time", "departure times on {depart_date.day_name:day} {depart_time.period_of_day:period} to {toloc.city_name:city}"},
  };
  return t;
}

std::vector<std::string> split(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// Zipf-like choice so that some entries are rare.
std::size_t zipf(Rng& rng, std::size_t n) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += 1.0 / static_cast<double>(i + 1);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < n; ++i) {
    u -= 1.0 / static_cast<double>(i + 1);
    if (u <= 0.0) return i;
  }
  return n - 1;
}

Utterance generate(Rng& rng) {
  const auto& tpl = templates()[rng.below(templates().size())];
  Utterance u;
  u.intent = tpl.intent;
  for (const auto& piece : split(tpl.pattern)) {
    if (piece.front() != '{') {
      u.tokens.push_back(piece);
      u.slot_tags.emplace_back("O");
      continue;
    }
    const auto colon = piece.find(':');
    const std::string slot = piece.substr(1, colon - 1);
    const std::string lex = piece.substr(colon + 1, piece.size() - colon - 2);
    const auto& entries = lexicons().at(lex);
    const auto words = split(entries[zipf(rng, entries.size())]);
    for (std::size_t i = 0; i < words.size(); ++i) {
      u.tokens.push_back(words[i]);
      u.slot_tags.push_back((i == 0 ? "B-" : "I-") + slot);
    }
  }
  return u;
}

std::vector<Utterance> generate_many(Rng& rng, int count) {
  std::vector<Utterance> out;
  for (int i = 0; i < count; ++i) out.push_back(generate(rng));
  return out;
}

Utterance rename(const Utterance& u) {
  Utterance t = u;
  for (auto& w : t.tokens) w = target_word(w);
  return t;
}

}  // namespace

std::string target_word(const std::string& source_word) {
  static const char* syllables[] = {"ka", "lo", "mi", "ru", "te", "sa", "no", "vi", "da", "pe",
                                    "zu", "ho", "ni", "ga", "be", "fo", "ri", "ta", "me", "xu"};
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : source_word) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  const std::size_t n = 4 + source_word.size() % 2;
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    out += syllables[h % 20];
    h /= 20;
  }
  return out;
}

SyntheticPair make_synthetic_pair(const SyntheticOptions& o) {
  if (o.dim <= 0) throw std::invalid_argument("synthetic: dim must be positive");
  Rng rng(o.seed);
  SyntheticPair p;
  p.source_train = generate_many(rng, o.source_train);
  p.source_dev = generate_many(rng, o.source_dev);
  const std::pair<std::vector<Utterance>*, int> targets[] = {
      {&p.target_train, o.target_train}, {&p.target_dev, o.target_dev}, {&p.target_test, o.target_test}};
  for (const auto& [dst, n] : targets) {
    for (const auto& u : generate_many(rng, n)) dst->push_back(rename(u));
  }

  // Vocabulary of the grammar: template words plus every lexicon token. Each
  // lexicon type gets a centroid so that entries of one type are loosely
  // clustered; a target word sits next to its source word.
  std::map<std::string, std::string> type_of;
  for (const auto& [lex, entries] : lexicons()) {
    for (const auto& e : entries) {
      for (const auto& w : split(e)) type_of.emplace(w, lex);
    }
  }
  for (const auto& t : templates()) {
    for (const auto& w : split(t.pattern)) {
      if (w.front() != '{') type_of.emplace(w, "");
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(o.dim));
  std::map<std::string, std::vector<double>> centroids;
  for (const auto& [lex, _] : lexicons()) {
    auto& c = centroids[lex];
    for (int d = 0; d < o.dim; ++d) c.push_back(scale * rng.normal());
  }
  std::set<std::string> target_words;
  for (const auto& [word, lex] : type_of) {
    std::vector<float> v(static_cast<std::size_t>(o.dim));
    for (int d = 0; d < o.dim; ++d) {
      const double centroid = lex.empty() ? 0.0 : centroids[lex][static_cast<std::size_t>(d)];
      v[static_cast<std::size_t>(d)] = static_cast<float>(centroid + scale * rng.normal());
    }
    std::vector<float> t = v;
    for (auto& x : t) x += static_cast<float>(o.alignment_noise * scale * rng.normal());
    const std::string tw = target_word(word);
    if (!target_words.insert(tw).second || type_of.count(tw)) {
      throw std::logic_error("synthetic: renaming is not injective at '" + word + "'");
    }
    p.words.push_back(word);
    p.vectors.push_back(std::move(v));
    p.words.push_back(tw);
    p.vectors.push_back(std::move(t));
  }
  return p;
}

void write_embeddings(std::ostream& out, const SyntheticPair& pair) {
  char buf[32];
  for (std::size_t i = 0; i < pair.words.size(); ++i) {
    out << pair.words[i];
    for (float x : pair.vectors[i]) {
      std::snprintf(buf, sizeof buf, " %.6f", static_cast<double>(x));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace slu
