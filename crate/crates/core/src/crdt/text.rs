use super::ElemId;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Elem {
    ch: char,
    deleted: bool,
    next: Option<ElemId>,
}

/// RGA sequence kept as a singly linked list keyed by element id.
///
/// A new element goes right after its origin, then past any elements with
/// a greater id. Those are concurrent inserts at the same spot (or their
/// descendants), which win the tie.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TextCrdt {
    elems: BTreeMap<ElemId, Elem>,
    head: Option<ElemId>,
    visible: usize,
}

impl TextCrdt {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &ElemId) -> bool {
        self.elems.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.visible
    }

    pub fn is_empty(&self) -> bool {
        self.visible == 0
    }

    /// Number of elements including tombstones.
    pub fn total_len(&self) -> usize {
        self.elems.len()
    }

    fn next_of(&self, id: &Option<ElemId>) -> Option<ElemId> {
        match id {
            None => self.head.clone(),
            Some(p) => self.elems[p].next.clone(),
        }
    }

    fn integrate(&mut self, id: ElemId, origin: Option<ElemId>, ch: char) {
        let mut prev = origin;
        let mut next = self.next_of(&prev);
        while let Some(n) = next {
            if n > id {
                next = self.elems[&n].next.clone();
                prev = Some(n);
            } else {
                next = Some(n);
                break;
            }
        }
        self.elems.insert(
            id.clone(),
            Elem {
                ch,
                deleted: false,
                next,
            },
        );
        match prev {
            None => self.head = Some(id),
            Some(p) => self.elems.get_mut(&p).expect("linked").next = Some(id),
        }
        self.visible += 1;
    }

    /// Inserts a run whose ids are `id`, `id+1`, ... Returns false if the run
    /// is already present. The origin must exist.
    pub fn insert_run(&mut self, id: &ElemId, origin: Option<&ElemId>, text: &str) -> bool {
        if self.contains(id) {
            return false;
        }
        debug_assert!(origin.is_none_or(|o| self.contains(o)));
        let mut origin = origin.cloned();
        for (k, ch) in text.chars().enumerate() {
            let eid = id.offset(k as u64);
            self.integrate(eid.clone(), origin, ch);
            origin = Some(eid);
        }
        true
    }

    /// Tombstones `id`. Returns whether it was visible.
    pub fn delete(&mut self, id: &ElemId) -> bool {
        match self.elems.get_mut(id) {
            Some(e) if !e.deleted => {
                e.deleted = true;
                self.visible -= 1;
                true
            }
            _ => false,
        }
    }

    /// All elements in order as `(id, char, deleted)`.
    pub fn iter(&self) -> impl Iterator<Item = (&ElemId, char, bool)> + '_ {
        let mut cur = self.head.as_ref();
        std::iter::from_fn(move || {
            let id = cur?;
            let e = &self.elems[id];
            cur = e.next.as_ref();
            Some((id, e.ch, e.deleted))
        })
    }

    pub fn visible_ids(&self) -> impl Iterator<Item = &ElemId> + '_ {
        self.iter().filter(|(_, _, d)| !d).map(|(id, _, _)| id)
    }

    /// Id of the visible element at `index`.
    pub fn id_at(&self, index: usize) -> Option<&ElemId> {
        self.visible_ids().nth(index)
    }

    /// Rebuilds from elements in list order.
    pub fn from_elements(elems: impl IntoIterator<Item = (ElemId, char, bool)>) -> Self {
        let mut t = Self::new();
        let mut last: Option<ElemId> = None;
        for (id, ch, deleted) in elems {
            t.elems.insert(
                id.clone(),
                Elem {
                    ch,
                    deleted,
                    next: None,
                },
            );
            match &last {
                None => t.head = Some(id.clone()),
                Some(p) => t.elems.get_mut(p).expect("inserted").next = Some(id.clone()),
            }
            if !deleted {
                t.visible += 1;
            }
            last = Some(id);
        }
        t
    }

    pub fn max_counter(&self) -> u64 {
        self.elems.keys().map(|k| k.counter).max().unwrap_or(0)
    }
}

impl std::fmt::Display for TextCrdt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (_, ch, deleted) in self.iter() {
            if !deleted {
                write!(f, "{ch}")?;
            }
        }
        Ok(())
    }
}
