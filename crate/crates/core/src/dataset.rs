//! Screening pool with optional gold labels, and the dataset CSV format
//! `item_id,text,gold_p1,...,gold_pn`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::domain::{Item, ItemId, PredicateId};
use crate::error::DataError;

#[derive(Debug, Clone)]
pub struct Dataset {
    items: Vec<Item>,
    n_predicates: usize,
    /// `gold[pos][p]`, when known.
    gold: Option<Vec<Vec<bool>>>,
    positions: HashMap<ItemId, usize>,
}

impl Dataset {
    pub fn new(
        items: Vec<Item>,
        n_predicates: usize,
        gold: Option<Vec<Vec<bool>>>,
    ) -> Result<Self, DataError> {
        let mut positions = HashMap::with_capacity(items.len());
        for (pos, item) in items.iter().enumerate() {
            if positions.insert(item.id(), pos).is_some() {
                return Err(DataError::DuplicateItem(item.id()));
            }
        }
        if let Some(gold) = &gold {
            for (pos, item) in items.iter().enumerate() {
                if gold.get(pos).map_or(true, |row| row.len() != n_predicates) {
                    return Err(DataError::MissingGold(item.id()));
                }
            }
        }
        Ok(Self {
            items,
            n_predicates,
            gold,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn n_predicates(&self) -> usize {
        self.n_predicates
    }

    pub fn predicates(&self) -> impl Iterator<Item = PredicateId> {
        (0..self.n_predicates).map(PredicateId)
    }

    pub fn position(&self, id: ItemId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn gold(&self) -> Option<&[Vec<bool>]> {
        self.gold.as_deref()
    }

    pub fn gold_label(&self, pos: usize, p: PredicateId) -> Option<bool> {
        self.gold.as_ref()?.get(pos)?.get(p.0).copied()
    }

    /// Gold screening outcome: the item passes every predicate.
    pub fn gold_passes(&self, pos: usize) -> Option<bool> {
        self.gold
            .as_ref()
            .and_then(|g| g.get(pos))
            .map(|row| row.iter().all(|&b| b))
    }

    pub fn gold_by_id(&self) -> Option<HashMap<ItemId, Vec<bool>>> {
        let gold = self.gold.as_ref()?;
        Some(
            self.items
                .iter()
                .zip(gold)
                .map(|(item, row)| (item.id(), row.clone()))
                .collect(),
        )
    }

    pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let parse_err = |line: u64, message: String| DataError::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let headers = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if headers.len() < 2 || &headers[0] != "item_id" || &headers[1] != "text" {
            return Err(parse_err(1, "header must start with item_id,text".into()));
        }
        let n_predicates = headers.len() - 2;
        for (k, h) in headers.iter().skip(2).enumerate() {
            if h != format!("gold_p{}", k + 1) {
                return Err(parse_err(1, format!("expected column gold_p{}, found {h:?}", k + 1)));
            }
        }

        let mut items = Vec::new();
        let mut gold = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let line = row as u64 + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            if record.len() != headers.len() {
                return Err(parse_err(line, format!("expected {} fields", headers.len())));
            }
            let id: u64 = record[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad item_id {:?}", &record[0])))?;
            let mut labels = Vec::with_capacity(n_predicates);
            for field in record.iter().skip(2) {
                labels.push(match field.trim() {
                    "1" => true,
                    "0" => false,
                    other => return Err(parse_err(line, format!("gold value must be 0 or 1, got {other:?}"))),
                });
            }
            items.push(Item::new(ItemId(id), &record[1]));
            gold.push(labels);
        }
        Self::new(items, n_predicates, Some(gold))
    }

    pub fn load_csv(path: &Path) -> Result<Self, DataError> {
        let file = std::fs::File::open(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, path)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["item_id".to_string(), "text".to_string()];
        header.extend((1..=self.n_predicates).map(|k| format!("gold_p{k}")));
        wtr.write_record(&header)?;
        for (pos, item) in self.items.iter().enumerate() {
            let mut row = vec![item.id().to_string(), item.text().to_string()];
            if let Some(gold) = &self.gold {
                row.extend(gold[pos].iter().map(|&b| if b { "1" } else { "0" }.to_string()));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        let io_err = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        self.write_csv(file).map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })
    }
}
