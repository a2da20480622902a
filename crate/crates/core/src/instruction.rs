//! Instruction handling: prompt construction, directive parsing, the
//! adverb-to-speed lexicon, and mission compilation.
//!
//! A directive is the structured text the language model returns: one line
//! per terrain as `★ <terrain>: <adverb>` and one line per landmark as
//! `# <landmark>`. Compilation turns that into an ordered list of
//! landmark-triggered mission legs.

use std::collections::BTreeMap;

use thiserror::Error;

pub const TERRAIN_MARKER: char = '★';
pub const LANDMARK_MARKER: char = '#';

#[derive(Debug, Error, PartialEq)]
pub enum InstructionError {
    #[error("instruction text is empty")]
    EmptyInstruction,
    #[error("directive contains no '{TERRAIN_MARKER}' terrain lines")]
    NoTerrainLines,
    #[error("malformed terrain line: {0:?} (expected '{TERRAIN_MARKER} terrain: adverb')")]
    MalformedTerrainLine(String),
    #[error("unknown adverb: {0:?}")]
    UnknownAdverb(String),
    #[error("trigger count mismatch: {pairs} terrain pairs need {} landmarks, got {landmarks}", pairs - 1)]
    TriggerCountMismatch { pairs: usize, landmarks: usize },
    #[error("invalid lexicon entry {token:?}: speed {speed} must be positive")]
    InvalidLexiconEntry { token: String, speed: f64 },
}

/// Adverb token → speed limit in m/s. Tokens are stored lowercased.
#[derive(Debug, Clone, PartialEq)]
pub struct AdverbLexicon {
    entries: BTreeMap<String, f64>,
}

impl Default for AdverbLexicon {
    fn default() -> Self {
        let mut lex = AdverbLexicon { entries: BTreeMap::new() };
        for (token, speed) in [
            ("quickly", 3.0),
            ("fast", 3.0),
            ("slowly", 1.5),
            ("carefully", 1.5),
            ("very slowly", 0.75),
        ] {
            lex.entries.insert(token.to_string(), speed);
        }
        lex
    }
}

impl AdverbLexicon {
    pub fn empty() -> Self {
        AdverbLexicon { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, token: &str, speed: f64) -> Result<(), InstructionError> {
        let token = token.trim().to_lowercase();
        if token.is_empty() || speed <= 0.0 || !speed.is_finite() {
            return Err(InstructionError::InvalidLexiconEntry { token, speed });
        }
        self.entries.insert(token, speed);
        Ok(())
    }

    /// Exact lowercase lookup, no fuzzy matching. A token that parses as a
    /// positive number resolves to itself, so a model emitting raw speeds
    /// still flows through the lexicon.
    pub fn resolve(&self, adverb: &str) -> Result<f64, InstructionError> {
        let token = adverb.trim().to_lowercase();
        if let Some(&speed) = self.entries.get(&token) {
            return Ok(speed);
        }
        if let Ok(v) = token.parse::<f64>() {
            if v > 0.0 && v.is_finite() {
                return Ok(v);
            }
        }
        Err(InstructionError::UnknownAdverb(token))
    }

    pub fn tokens(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Parsed but not yet compiled model output.
#[derive(Debug, Clone, PartialEq)]
pub struct Directive {
    pub terrain_speed_pairs: Vec<(String, String)>,
    pub landmarks: Vec<String>,
}

/// What advances the mission into a leg.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LegTrigger {
    StartOfMission,
    Landmark(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionLeg {
    pub preferred_terrain: String,
    pub speed_limit: f64,
    pub trigger: LegTrigger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionPlan {
    pub legs: Vec<MissionLeg>,
    pub terrain_vocabulary: Vec<String>,
    pub landmark_vocabulary: Vec<String>,
}

/// Parse model output into a [`Directive`]. Lines beginning with `★` are
/// `terrain: adverb` pairs, lines beginning with `#` are landmark labels,
/// everything else is ignored.
pub fn parse_directive(llm_output: &str) -> Result<Directive, InstructionError> {
    let mut pairs = Vec::new();
    let mut landmarks = Vec::new();
    for line in llm_output.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix(TERRAIN_MARKER) {
            let mut parts = rest.splitn(3, ':');
            let terrain = parts.next().unwrap_or("").trim().to_lowercase();
            let adverb = parts.next().map(|s| s.trim().to_lowercase());
            match (adverb, parts.next()) {
                (Some(adverb), None) if !terrain.is_empty() && !adverb.is_empty() => {
                    pairs.push((terrain, adverb));
                }
                _ => return Err(InstructionError::MalformedTerrainLine(line.to_string())),
            }
        } else if let Some(rest) = line.strip_prefix(LANDMARK_MARKER) {
            let label = rest.trim().to_lowercase();
            if !label.is_empty() {
                landmarks.push(label);
            }
        }
    }
    if pairs.is_empty() {
        return Err(InstructionError::NoTerrainLines);
    }
    Ok(Directive { terrain_speed_pairs: pairs, landmarks })
}

/// Compile a directive into mission legs. Leg i takes terrain i and the
/// resolved adverb speed; leg 0 starts the mission and leg i>0 is triggered
/// by landmark i-1. Consecutive legs that normalize to the same
/// (terrain, speed) are merged, dropping the later leg and its trigger.
pub fn compile_mission(
    directive: &Directive,
    lexicon: &AdverbLexicon,
) -> Result<MissionPlan, InstructionError> {
    let pairs = directive.terrain_speed_pairs.len();
    let landmarks = directive.landmarks.len();
    if pairs == 0 {
        return Err(InstructionError::NoTerrainLines);
    }
    if landmarks + 1 != pairs {
        return Err(InstructionError::TriggerCountMismatch { pairs, landmarks });
    }
    let mut legs: Vec<MissionLeg> = Vec::with_capacity(pairs);
    for (i, (terrain, adverb)) in directive.terrain_speed_pairs.iter().enumerate() {
        let speed_limit = lexicon.resolve(adverb)?;
        let trigger = if i == 0 {
            LegTrigger::StartOfMission
        } else {
            LegTrigger::Landmark(directive.landmarks[i - 1].clone())
        };
        if let Some(last) = legs.last() {
            if last.preferred_terrain == *terrain && last.speed_limit == speed_limit {
                continue;
            }
        }
        legs.push(MissionLeg { preferred_terrain: terrain.clone(), speed_limit, trigger });
    }
    let mut terrain_vocabulary = Vec::new();
    let mut landmark_vocabulary = Vec::new();
    for leg in &legs {
        if !terrain_vocabulary.contains(&leg.preferred_terrain) {
            terrain_vocabulary.push(leg.preferred_terrain.clone());
        }
        if let LegTrigger::Landmark(l) = &leg.trigger {
            if !landmark_vocabulary.contains(l) {
                landmark_vocabulary.push(l.clone());
            }
        }
    }
    Ok(MissionPlan { legs, terrain_vocabulary, landmark_vocabulary })
}

/// Inverse of parsing+compilation: format a plan back into directive text.
/// Used by tests and by scenario tooling to round-trip plans.
pub fn render_plan(plan: &MissionPlan) -> String {
    let mut out = String::new();
    for leg in &plan.legs {
        out.push_str(&format!("{} {}: {}\n", TERRAIN_MARKER, leg.preferred_terrain, leg.speed_limit));
    }
    for leg in &plan.legs {
        if let LegTrigger::Landmark(l) = &leg.trigger {
            out.push_str(&format!("{} {}\n", LANDMARK_MARKER, l));
        }
    }
    out
}

const PROMPT_PREAMBLE: &str = "You are a navigation assistant for an off-road ground robot. \
Extract from the instruction the preferred terrains in order, the pace adverb for each terrain, \
and the landmarks (in order) at which the robot switches terrain or speed.";

const PROMPT_EXAMPLE: &str = "Example\ninstruction: \"drive quickly on the asphalt until the parked car, then go slowly on the sandy road\"\noutput:\n★ asphalt: quickly\n★ sandy road: slowly\n# parked car";

/// Assemble the full prompt: preamble, one worked example, the terrain
/// vocabulary, the verbatim instruction, and the output-format contract.
pub fn build_prompt(
    instruction_text: &str,
    terrain_vocabulary: &[String],
    lexicon: &AdverbLexicon,
) -> Result<String, InstructionError> {
    if instruction_text.trim().is_empty() {
        return Err(InstructionError::EmptyInstruction);
    }
    let adverbs: Vec<String> =
        lexicon.tokens().map(|(t, s)| format!("{t} ({s} m/s)")).collect();
    Ok(format!(
        "{PROMPT_PREAMBLE}\n\n{PROMPT_EXAMPLE}\n\n\
         Known terrains: {terrains}\nKnown adverbs: {adverbs}\n\n\
         instruction: \"{instruction}\"\n\n\
         Output format: one line per terrain as `{t} <terrain>: <adverb>` and one line per landmark as `{l} <landmark>`. \
         Emit nothing else.",
        terrains = terrain_vocabulary.join(", "),
        adverbs = adverbs.join(", "),
        instruction = instruction_text,
        t = TERRAIN_MARKER,
        l = LANDMARK_MARKER,
    ))
}
