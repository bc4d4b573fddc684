use std::collections::HashMap;

use nalgebra::Vector3;

use super::{SceneDoc, SceneError, SceneNode};
use crate::se3::Pose;

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    Fresh,
    Visiting,
    Done,
}

struct Arena<'a> {
    nodes: Vec<&'a SceneNode>,
    parent: Vec<Option<usize>>,
    by_name: HashMap<&'a str, usize>,
    mark: Vec<Mark>,
    world: Vec<Pose>,
    local_pos: Vec<Vector3<f64>>,
}

impl<'a> Arena<'a> {
    fn new(root: &'a SceneNode) -> Self {
        let mut a = Arena {
            nodes: Vec::new(),
            parent: Vec::new(),
            by_name: HashMap::new(),
            mark: Vec::new(),
            world: Vec::new(),
            local_pos: Vec::new(),
        };
        a.push(root, None);
        a.mark = vec![Mark::Fresh; a.nodes.len()];
        a.world = vec![Pose::identity(); a.nodes.len()];
        a.local_pos = a.nodes.iter().map(|n| n.pos).collect();
        a
    }

    fn push(&mut self, node: &'a SceneNode, parent: Option<usize>) {
        let idx = self.nodes.len();
        self.nodes.push(node);
        self.parent.push(parent);
        if !node.name.is_empty() {
            self.by_name.insert(node.name.as_str(), idx);
        }
        for c in &node.children {
            self.push(c, Some(idx));
        }
    }

    fn world_pose(&mut self, i: usize) -> Result<Pose, SceneError> {
        match self.mark[i] {
            Mark::Done => return Ok(self.world[i]),
            Mark::Visiting => {
                return Err(SceneError::CyclicAnchorReference(self.nodes[i].name.clone()))
            }
            Mark::Fresh => {}
        }
        self.mark[i] = Mark::Visiting;
        let node = self.nodes[i];
        let parent_world = match self.parent[i] {
            Some(p) => self.world_pose(p)?,
            None => Pose::identity(),
        };
        if let Some(r) = &node.pos_ref {
            let unknown = || SceneError::UnknownAnchor {
                node: r.node.clone(),
                anchor: r.anchor.clone(),
            };
            let j = *self.by_name.get(r.node.as_str()).ok_or_else(unknown)?;
            let offset = *self.nodes[j].anchors.get(&r.anchor).ok_or_else(unknown)?;
            let anchor_world = self.world_pose(j)?.position() + offset;
            self.local_pos[i] = parent_world
                .inverse()
                .transform_point(&(anchor_world + node.pos));
        }
        let world = parent_world.compose(&Pose::new(self.local_pos[i], node.quat));
        self.world[i] = world;
        self.mark[i] = Mark::Done;
        Ok(world)
    }
}

/// Replace every anchor reference by a concrete parent-frame position.
///
/// Anchor offsets are world-frame vectors added to the world position of
/// the node that declares them; the referencing node's resolved position is
/// that point plus its own offset, mapped into its parent frame.
pub fn resolve(doc: &SceneDoc) -> Result<SceneDoc, SceneError> {
    let mut arena = Arena::new(&doc.root);
    for i in 0..arena.nodes.len() {
        arena.world_pose(i)?;
    }
    let mut next = 0usize;
    let root = rebuild(&doc.root, &arena.local_pos, &mut next);
    Ok(SceneDoc { root })
}

fn rebuild(node: &SceneNode, local: &[Vector3<f64>], next: &mut usize) -> SceneNode {
    let idx = *next;
    *next += 1;
    let mut out = SceneNode {
        pos: local[idx],
        pos_ref: None,
        children: Vec::with_capacity(node.children.len()),
        ..node.clone_shallow()
    };
    for c in &node.children {
        out.children.push(rebuild(c, local, next));
    }
    out
}

impl SceneNode {
    fn clone_shallow(&self) -> SceneNode {
        SceneNode {
            kind: self.kind,
            name: self.name.clone(),
            pos: self.pos,
            pos_ref: self.pos_ref.clone(),
            quat: self.quat,
            size: self.size.clone(),
            attrs: self.attrs.clone(),
            anchors: self.anchors.clone(),
            children: Vec::new(),
        }
    }
}
