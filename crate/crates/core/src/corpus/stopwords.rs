//! Bundled stopword lists. Accent-free forms are included for Spanish so the
//! lists still match after accent folding.

pub const ENGLISH: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are",
    "aren", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "cannot", "could", "couldn", "did", "didn", "do", "does", "doesn", "doing", "don",
    "down", "during", "each", "even", "ever", "every", "few", "for", "from", "further", "get", "gets",
    "got", "had", "hadn", "has", "hasn", "have", "haven", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "however", "i", "if", "in", "into", "is", "isn", "it",
    "its", "itself", "just", "let", "like", "ll", "me", "more", "most", "mustn", "my", "myself", "no",
    "nor", "not", "now", "of", "off", "on", "once", "one", "only", "or", "other", "ought", "our",
    "ours", "ourselves", "out", "over", "own", "same", "shan", "she", "should", "shouldn", "so",
    "some", "still", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "us",
    "very", "via", "was", "wasn", "we", "were", "weren", "what", "when", "where", "which", "while",
    "who", "whom", "why", "will", "with", "won", "would", "wouldn", "yet", "you", "your", "yours",
    "yourself", "yourselves",
];

pub const SPANISH: &[&str] = &[
    "a", "al", "algo", "algunas", "algunos", "ante", "antes", "aqui", "aquí", "asi", "así", "aun",
    "aún", "cada", "como", "cómo", "con", "contra", "cual", "cuál", "cuando", "cuándo", "de", "del",
    "desde", "donde", "dónde", "dos", "el", "él", "ella", "ellas", "ellos", "en", "entre", "era",
    "eran", "es", "esa", "esas", "ese", "eso", "esos", "esta", "está", "estaba", "estado", "estan",
    "están", "estar", "estas", "este", "esto", "estos", "fue", "fueron", "ha", "han", "hasta", "hay",
    "la", "las", "le", "les", "lo", "los", "mas", "más", "me", "mi", "mis", "mucho", "muy", "nada",
    "ni", "no", "nos", "nosotros", "o", "otra", "otro", "para", "pero", "poco", "por", "porque",
    "que", "qué", "quien", "quién", "se", "sea", "ser", "si", "sí", "sido", "sin", "sobre", "solo",
    "sólo", "son", "su", "sus", "tambien", "también", "tan", "te", "tiene", "tienen", "todo", "todos",
    "tu", "tú", "un", "una", "uno", "unos", "ya", "yo",
];
