use std::io::Write;

use super::SensorError;

const DB_EPSILON: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEntry {
    pub carrier_freq: f64,
    pub energy: f64,
    pub energy_db: f64,
}

impl EnergyEntry {
    pub fn new(carrier_freq: f64, energy: f64) -> Self {
        EnergyEntry {
            carrier_freq,
            energy,
            energy_db: 10.0 * (energy + DB_EPSILON).log10(),
        }
    }
}

/// Averaged energy per carrier frequency over a swept band.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    /// Ascending by carrier frequency.
    pub entries: Vec<EnergyEntry>,
    /// `[low, high)` covered by the entries.
    pub band: (f64, f64),
    pub sensed_at: f64,
    /// Simulated seconds spent producing this map, tune delays included.
    pub sensing_time: f64,
}

impl EnergyMap {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Entry whose carrier is closest to `freq`.
    pub fn nearest(&self, freq: f64) -> Option<&EnergyEntry> {
        let idx = self.entries.partition_point(|e| e.carrier_freq < freq);
        let below = idx.checked_sub(1).map(|i| &self.entries[i]);
        let above = self.entries.get(idx);
        match (below, above) {
            (Some(b), Some(a)) => {
                if freq - b.carrier_freq <= a.carrier_freq - freq {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (b, a) => b.or(a),
        }
    }

    pub fn argmax(&self) -> Option<&EnergyEntry> {
        self.entries
            .iter()
            .fold(None, |best: Option<&EnergyEntry>, e| match best {
                Some(b) if b.energy >= e.energy => Some(b),
                _ => Some(e),
            })
    }

    /// Concatenates maps of disjoint bands into one ascending map.
    pub fn merge(mut maps: Vec<EnergyMap>) -> Option<EnergyMap> {
        maps.sort_by(|a, b| a.band.0.total_cmp(&b.band.0));
        let first = maps.first()?;
        let sensed_at = maps.iter().map(|m| m.sensed_at).fold(f64::INFINITY, f64::min);
        let band = (first.band.0, maps.iter().map(|m| m.band.1).fold(f64::MIN, f64::max));
        let sensing_time = maps.iter().map(|m| m.sensing_time).sum();
        let entries = maps.into_iter().flat_map(|m| m.entries).collect();
        Some(EnergyMap {
            entries,
            band,
            sensed_at,
            sensing_time,
        })
    }

    /// CSV with header `carrier_hz,energy,energy_db`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["carrier_hz", "energy", "energy_db"])?;
        for e in &self.entries {
            w.write_record([
                e.carrier_freq.to_string(),
                e.energy.to_string(),
                e.energy_db.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Lowest-energy entry, skipping carriers listed in `exclude`. Ties go to
/// the lowest frequency.
pub fn min_energy_frequency(map: &EnergyMap, exclude: &[f64]) -> Result<EnergyEntry, SensorError> {
    map.entries
        .iter()
        .filter(|e| !exclude.contains(&e.carrier_freq))
        .fold(None, |best: Option<&EnergyEntry>, e| match best {
            Some(b) if b.energy <= e.energy => Some(b),
            _ => Some(e),
        })
        .copied()
        .ok_or(SensorError::EmptyMap)
}
