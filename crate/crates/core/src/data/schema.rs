use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    UnswNb15,
    BotIot,
    Custom,
}

impl SchemaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaKind::UnswNb15 => "unsw_nb15",
            SchemaKind::BotIot => "bot_iot",
            SchemaKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for SchemaKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "unsw_nb15" | "unsw" => Ok(SchemaKind::UnswNb15),
            "bot_iot" | "botiot" => Ok(SchemaKind::BotIot),
            "custom" => Ok(SchemaKind::Custom),
            other => Err(DataError::UnknownSchema(other.to_string())),
        }
    }
}

/// How a raw feature string becomes a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Numeric,
    /// Dotted-quad IPv4, read as its 32-bit unsigned value.
    Ipv4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    #[serde(default)]
    pub kind: FeatureKind,
    /// Alternative header spellings found in published CSVs.
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl FeatureColumn {
    fn numeric(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Numeric,
            aliases: Vec::new(),
        }
    }

    fn ipv4(name: &str) -> Self {
        Self {
            kind: FeatureKind::Ipv4,
            ..Self::numeric(name)
        }
    }

    fn alias(mut self, alias: &str) -> Self {
        self.aliases.push(alias.to_string());
        self
    }

    /// Case-insensitive, whitespace-trimmed header match.
    pub fn matches(&self, header: &str) -> bool {
        let h = header.trim();
        h.eq_ignore_ascii_case(&self.name) || self.aliases.iter().any(|a| h.eq_ignore_ascii_case(a))
    }
}

/// Feature selection, label column and class vocabulary of one dataset layout.
/// The order of `class_names` defines the integer label encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: SchemaKind,
    pub feature_columns: Vec<FeatureColumn>,
    pub label_column: String,
    pub class_names: Vec<String>,
    /// Alternative label spellings, `(alias, canonical class name)`.
    #[serde(default)]
    pub label_aliases: Vec<(String, String)>,
}

impl DatasetSchema {
    /// The 13 selected UNSW-NB15 flow features with the 10 `attack_cat` classes.
    pub fn unsw_nb15() -> Self {
        Self {
            name: SchemaKind::UnswNb15,
            feature_columns: vec![
                FeatureColumn::ipv4("srcip"),
                FeatureColumn::numeric("sport"),
                FeatureColumn::ipv4("dstip"),
                FeatureColumn::numeric("dsport"),
                FeatureColumn::numeric("dur"),
                FeatureColumn::numeric("sbytes"),
                FeatureColumn::numeric("dbytes"),
                FeatureColumn::numeric("sttl"),
                FeatureColumn::numeric("dttl"),
                FeatureColumn::numeric("sload"),
                FeatureColumn::numeric("dload"),
                FeatureColumn::numeric("spkts"),
                FeatureColumn::numeric("dpkts"),
            ],
            label_column: "attack_cat".into(),
            class_names: [
                "Normal",
                "Exploits",
                "Reconnaissance",
                "DoS",
                "Generic",
                "Shellcode",
                "Fuzzers",
                "Worms",
                "Backdoor",
                "Analysis",
            ]
            .map(String::from)
            .to_vec(),
            label_aliases: vec![("Backdoors".into(), "Backdoor".into())],
        }
    }

    /// The 10 pre-selected Bot-IoT features with the 5 `category` classes.
    pub fn bot_iot() -> Self {
        Self {
            name: SchemaKind::BotIot,
            feature_columns: vec![
                FeatureColumn::numeric("rate"),
                FeatureColumn::numeric("srate"),
                FeatureColumn::numeric("drate"),
                FeatureColumn::numeric("min"),
                FeatureColumn::numeric("max"),
                FeatureColumn::numeric("mean"),
                FeatureColumn::numeric("std_dev").alias("stddev"),
                FeatureColumn::numeric("state_number"),
                FeatureColumn::numeric("flgs_number"),
                FeatureColumn::numeric("seq"),
            ],
            label_column: "category".into(),
            class_names: ["Normal", "DDoS", "DoS", "Reconnaissance", "Theft"]
                .map(String::from)
                .to_vec(),
            label_aliases: Vec::new(),
        }
    }

    pub fn builtin(kind: SchemaKind) -> Result<Self, DataError> {
        match kind {
            SchemaKind::UnswNb15 => Ok(Self::unsw_nb15()),
            SchemaKind::BotIot => Ok(Self::bot_iot()),
            SchemaKind::Custom => Err(DataError::UnknownSchema(
                "custom schemas must be loaded from a schema file".into(),
            )),
        }
    }

    /// Reads a custom schema from TOML.
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let schema: Self = toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.feature_columns.is_empty() {
            return Err(DataError::Config("schema has no feature columns".into()));
        }
        if self.class_names.is_empty() {
            return Err(DataError::Config("schema has no classes".into()));
        }
        for (k, name) in self.class_names.iter().enumerate() {
            if self.class_names[..k].iter().any(|n| n.eq_ignore_ascii_case(name)) {
                return Err(DataError::Config(format!("duplicate class name {name}")));
            }
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.feature_columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn num_features(&self) -> usize {
        self.feature_columns.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Class index for a raw label, trimmed and case-insensitive, aliases honored.
    pub fn encode_label(&self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        let canonical = self
            .label_aliases
            .iter()
            .find(|(alias, _)| alias.eq_ignore_ascii_case(raw))
            .map_or(raw, |(_, c)| c.as_str());
        self.class_names.iter().position(|c| c.eq_ignore_ascii_case(canonical))
    }

    pub fn decode_label(&self, index: usize) -> Option<&str> {
        self.class_names.get(index).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_schema_sizes() {
        let unsw = DatasetSchema::unsw_nb15();
        assert_eq!(unsw.num_features(), 13);
        assert_eq!(unsw.num_classes(), 10);
        let bot = DatasetSchema::bot_iot();
        assert_eq!(bot.num_features(), 10);
        assert_eq!(bot.num_classes(), 5);
        assert_eq!(
            bot.feature_names(),
            ["rate", "srate", "drate", "min", "max", "mean", "std_dev", "state_number", "flgs_number", "seq"]
        );
    }

    #[test]
    fn label_encoding_round_trips() {
        for schema in [DatasetSchema::unsw_nb15(), DatasetSchema::bot_iot()] {
            for (k, name) in schema.class_names.iter().enumerate() {
                assert_eq!(schema.encode_label(name), Some(k));
                assert_eq!(schema.decode_label(k), Some(name.as_str()));
            }
        }
    }

    #[test]
    fn labels_are_normalized() {
        let unsw = DatasetSchema::unsw_nb15();
        assert_eq!(unsw.encode_label(" Fuzzers "), Some(6));
        assert_eq!(unsw.encode_label("backdoors"), Some(8));
        assert_eq!(unsw.encode_label("dos"), Some(3));
        assert_eq!(unsw.encode_label("Ransomware"), None);
    }

    #[test]
    fn header_matching() {
        let bot = DatasetSchema::bot_iot();
        assert!(bot.feature_columns[6].matches(" STDDEV"));
        assert!(bot.feature_columns[6].matches("std_dev"));
        assert!(!bot.feature_columns[6].matches("std"));
    }

    #[test]
    fn custom_schema_from_toml() {
        let text = r#"
            name = "custom"
            label_column = "y"
            class_names = ["benign", "bad"]
            [[feature_columns]]
            name = "a"
            [[feature_columns]]
            name = "peer"
            kind = "ipv4"
        "#;
        let s = DatasetSchema::from_toml(text).unwrap();
        assert_eq!(s.name, SchemaKind::Custom);
        assert_eq!(s.feature_columns[1].kind, FeatureKind::Ipv4);
        assert!(DatasetSchema::from_toml("name = \"custom\"\nlabel_column=\"y\"\nclass_names=[]\nfeature_columns=[]").is_err());
    }

    #[test]
    fn schema_names_parse() {
        assert_eq!("bot-iot".parse::<SchemaKind>().unwrap(), SchemaKind::BotIot);
        assert_eq!("UNSW_NB15".parse::<SchemaKind>().unwrap(), SchemaKind::UnswNb15);
        assert!("kdd".parse::<SchemaKind>().is_err());
    }
}
