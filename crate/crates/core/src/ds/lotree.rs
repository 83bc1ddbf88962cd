//! Logical-ordering tree: an unbalanced BST whose nodes are also threaded
//! on a sorted doubly linked list. Membership is decided on the list; the
//! tree only speeds up the search.
//!
//! Locking: `succ` latches protect list updates and are always taken
//! before any tree latch. Within one attempt the first tree latch is a
//! blocking acquire and the rest are try-acquires; on failure the attempt
//! drops its tree latches, waits for the contended one and retries.
//! An inserted node is published on the list before it is linked into the
//! tree, so its inserter holds the node's tree latch until the link is in
//! place, and a node whose `parent` is still null (other than the root)
//! is not used as a parent.

use super::{fin, flag, kv, link, lk};
use crate::runtime::{Abort, Ctx, Latch, Mutation, Walk, World};
use crate::trace::{ExtendKind, Field, KeyVal, Loc, ObjId, ReachKind, Ret, Value};

#[derive(Clone, Copy, Debug)]
pub struct LoTree {
    min: ObjId,
    root: ObjId,
}

enum Attempt<T> {
    Done(T),
    /// Tree latches were dropped; wait for this one and retry.
    Contended(ObjId),
    Retry,
}

impl LoTree {
    pub fn init(w: &mut World) -> Self {
        let node = |k: KeyVal| {
            vec![
                (Field::Key, Value::Key(k)),
                (Field::Rem, Value::Bool(false)),
                (Field::Left, Value::Null),
                (Field::Right, Value::Null),
                (Field::Parent, Value::Null),
                (Field::Succ, Value::Null),
                (Field::Pred, Value::Null),
            ]
        };
        let max = w.create(&node(KeyVal::PosInf));
        let min = w.create(&node(KeyVal::NegInf));
        w.state.set(Loc::new(min, Field::Succ), link(max));
        w.state.set(Loc::new(max, Field::Pred), link(min));
        w.set_root("min", min);
        w.set_root("max", max);
        w.set_root("root", max);
        LoTree { min, root: max }
    }

    /// BST descent; returns the node holding `k` or the last node before a
    /// null link, with its key.
    async fn tree_locate(self, ctx: &Ctx, walk: &mut Walk, k: i64) -> (ObjId, KeyVal) {
        let mut x = self.root;
        loop {
            let xk = kv(ctx.step(walk, x, Field::Key).await);
            if xk == fin(k) {
                return (x, xk);
            }
            let f = if xk < fin(k) { Field::Right } else { Field::Left };
            match lk(ctx.step(walk, x, f).await) {
                Some(y) => x = y,
                None => {
                    walk.pop();
                    return (x, xk);
                }
            }
        }
    }

    pub async fn contains(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        let mut w1 = ctx.walk_inv("lo:locate", Some(k), ReachKind::Succ, ExtendKind::TreePred, false);
        let (mut x, mut xk) = self.tree_locate(ctx, &mut w1, k).await;
        while xk > fin(k) {
            x = lk(ctx.step(&mut w1, x, Field::Pred).await).expect("pred chain ends at -inf");
            xk = kv(ctx.step(&mut w1, x, Field::Key).await);
        }
        let t1 = w1.last_t();
        ctx.log_walk(w1);

        let mut w2 = ctx.walk_inv("lo:succ-walk", Some(k), ReachKind::SuccK, ExtendKind::Succ, true);
        w2.push(Loc::new(x, Field::Key), t1);
        while xk < fin(k) {
            x = lk(ctx.step(&mut w2, x, Field::Succ).await).expect("succ chain ends at +inf");
            xk = kv(ctx.step(&mut w2, x, Field::Key).await);
        }
        ctx.log_walk(w2);
        if xk != fin(k) {
            return Ok(Ret::Bool(false));
        }
        let (rem, t) = ctx.read(x, Field::Rem).await;
        ctx.log_field_read("lo:contains-rem", k, ReachKind::SuccK, x, Field::Rem, ctx.inv_t(), t, rem);
        Ok(Ret::Bool(!flag(rem)))
    }

    /// Tree descent plus one pred step when the landing node is not below `k`.
    async fn locate_pred(self, ctx: &Ctx, site: &'static str, k: i64) -> ObjId {
        let mut walk = ctx.walk_inv(site, Some(k), ReachKind::Succ, ExtendKind::TreePred, false);
        let (x, xk) = self.tree_locate(ctx, &mut walk, k).await;
        let p = if xk >= fin(k) {
            let p = lk(ctx.step(&mut walk, x, Field::Pred).await).expect("pred chain ends at -inf");
            walk.set_end(Loc::new(p, Field::Key));
            p
        } else {
            x
        };
        ctx.log_walk(walk);
        p
    }

    /// Latches `p.succ` and checks `k ∈ (p.key, s.key]` and `¬p.rem`.
    async fn lock_window(self, ctx: &Ctx, p: ObjId, k: i64) -> Option<(ObjId, KeyVal)> {
        ctx.lock(p, Latch::Succ).await;
        let s = lk(ctx.val(p, Field::Succ).await).expect("locked node has a successor");
        let pk = kv(ctx.val(p, Field::Key).await);
        let sk = kv(ctx.val(s, Field::Key).await);
        let prem = flag(ctx.val(p, Field::Rem).await);
        if pk < fin(k) && fin(k) <= sk && !prem {
            Some((s, sk))
        } else {
            ctx.unlock_all().await;
            None
        }
    }

    pub async fn insert(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        let (p, s) = loop {
            let p = self.locate_pred(ctx, "lo:insert-locate", k).await;
            match self.lock_window(ctx, p, k).await {
                Some((_, sk)) if sk == fin(k) => {
                    ctx.unlock_all().await;
                    return Ok(Ret::Bool(false));
                }
                Some((s, _)) => break (p, s),
                None => ctx.restart()?,
            }
        };
        let n = ctx
            .alloc(
                vec![
                    (Field::Key, Value::Key(fin(k))),
                    (Field::Rem, Value::Bool(false)),
                    (Field::Left, Value::Null),
                    (Field::Right, Value::Null),
                    (Field::Parent, Value::Null),
                ],
                "insert:alloc",
            )
            .await;
        ctx.write(n, Field::Succ, link(s), "insert:init-succ").await;
        ctx.write(n, Field::Pred, link(p), "insert:init-pred").await;
        ctx.lock(n, Latch::Tree).await;
        let orig = ctx.has(Mutation::OrigInsertOrder);
        if !orig {
            ctx.write(p, Field::Succ, link(n), "insert:succ-publish").await;
        }
        self.tree_link(ctx, p, n).await?;
        let s = lk(ctx.val(n, Field::Succ).await).expect("new node has a successor");
        ctx.write(s, Field::Pred, link(n), "insert:pred-link").await;
        if orig {
            ctx.write(p, Field::Succ, link(n), "insert:succ-publish").await;
        }
        ctx.unlock_all().await;
        Ok(Ret::Bool(true))
    }

    /// Whether `z` is the root or already hangs in the tree.
    async fn in_tree(self, ctx: &Ctx, z: ObjId) -> bool {
        z == self.root || lk(ctx.val(z, Field::Parent).await).is_some()
    }

    /// Links `n` below `p` or `s`, whichever has the matching slot free.
    async fn tree_link(self, ctx: &Ctx, p: ObjId, n: ObjId) -> Result<(), Abort> {
        loop {
            let s = lk(ctx.val(n, Field::Succ).await).expect("new node has a successor");
            let z = if p != self.min && lk(ctx.val(p, Field::Right).await).is_none() {
                Some((p, Field::Right))
            } else if lk(ctx.val(s, Field::Left).await).is_none() {
                Some((s, Field::Left))
            } else {
                None
            };
            let Some((z, side)) = z else {
                ctx.restart()?;
                continue;
            };
            if !ctx.try_lock(z, Latch::Tree).await {
                ctx.unlock_kind(Latch::Tree).await;
                ctx.wait_free(z, Latch::Tree).await;
                ctx.restart()?;
                ctx.lock(n, Latch::Tree).await;
                continue;
            }
            let ok = self.in_tree(ctx, z).await
                && !flag(ctx.val(z, Field::Rem).await)
                && lk(ctx.val(z, side).await).is_none();
            if !ok {
                ctx.unlock_kind(Latch::Tree).await;
                ctx.restart()?;
                ctx.lock(n, Latch::Tree).await;
                continue;
            }
            ctx.write(z, side, link(n), "insert:tree-link").await;
            ctx.write(n, Field::Parent, link(z), "insert:set-parent").await;
            ctx.unlock_kind(Latch::Tree).await;
            return Ok(());
        }
    }

    pub async fn delete(self, ctx: &Ctx, k: i64) -> Result<Ret, Abort> {
        let (p, s) = loop {
            let p = self.locate_pred(ctx, "lo:delete-locate", k).await;
            match self.lock_window(ctx, p, k).await {
                Some((_, sk)) if sk != fin(k) => {
                    ctx.unlock_all().await;
                    return Ok(Ret::Bool(false));
                }
                Some((s, _)) => break (p, s),
                None => ctx.restart()?,
            }
        };
        ctx.lock(s, Latch::Succ).await;
        if !ctx.has(Mutation::SkipMark) {
            ctx.write(s, Field::Rem, Value::Bool(true), "delete:mark").await;
        }
        self.remove_from_tree(ctx, s).await?;
        let y = ctx.val(s, Field::Succ).await;
        let yo = lk(y).expect("deleted node has a successor");
        ctx.write(yo, Field::Pred, link(p), "delete:pred-fix").await;
        ctx.write(p, Field::Succ, y, "delete:succ-unlink").await;
        ctx.unlock_all().await;
        Ok(Ret::Bool(true))
    }

    async fn remove_from_tree(self, ctx: &Ctx, n: ObjId) -> Result<(), Abort> {
        loop {
            match self.remove_attempt(ctx, n).await {
                Attempt::Done(()) => return Ok(()),
                Attempt::Contended(o) => {
                    ctx.wait_free(o, Latch::Tree).await;
                    ctx.restart()?;
                }
                Attempt::Retry => ctx.restart()?,
            }
        }
    }

    /// Try-acquires a tree latch, dropping all tree latches on failure.
    async fn try_tree(self, ctx: &Ctx, o: ObjId) -> bool {
        if ctx.try_lock(o, Latch::Tree).await {
            true
        } else {
            ctx.unlock_kind(Latch::Tree).await;
            false
        }
    }

    async fn is_child(self, ctx: &Ctx, par: ObjId, n: ObjId) -> bool {
        lk(ctx.val(par, Field::Left).await) == Some(n) || lk(ctx.val(par, Field::Right).await) == Some(n)
    }

    async fn remove_attempt(self, ctx: &Ctx, n: ObjId) -> Attempt<()> {
        ctx.lock(n, Latch::Tree).await;
        let par = lk(ctx.val(n, Field::Parent).await).expect("a linked node has a parent");
        if !self.try_tree(ctx, par).await {
            return Attempt::Contended(par);
        }
        // par may have been unlinked while we waited for it
        if lk(ctx.val(n, Field::Parent).await) != Some(par) || !self.is_child(ctx, par, n).await {
            ctx.unlock_kind(Latch::Tree).await;
            return Attempt::Retry;
        }
        let l = lk(ctx.val(n, Field::Left).await);
        let r = lk(ctx.val(n, Field::Right).await);
        if l.is_none() || r.is_none() {
            if let Some(c) = l.or(r) {
                if !self.try_tree(ctx, c).await {
                    return Attempt::Contended(c);
                }
            }
            self.update_child(ctx, par, n, l.or(r)).await;
            self.clear_children(ctx, n, l, r).await;
            ctx.unlock_kind(Latch::Tree).await;
            return Attempt::Done(());
        }
        let s = lk(ctx.val(n, Field::Succ).await).expect("inner node has a successor");
        if !self.try_tree(ctx, s).await {
            return Attempt::Contended(s);
        }
        let sp = lk(ctx.val(s, Field::Parent).await).expect("successor hangs in the tree");
        if sp != n && !self.try_tree(ctx, sp).await {
            return Attempt::Contended(sp);
        }
        let ok = lk(ctx.val(s, Field::Parent).await) == Some(sp)
            && lk(ctx.val(s, Field::Left).await).is_none()
            && self.is_child(ctx, sp, s).await;
        if !ok {
            ctx.unlock_kind(Latch::Tree).await;
            return Attempt::Retry;
        }
        let sr = lk(ctx.val(s, Field::Right).await);
        if let Some(c) = sr {
            if !self.try_tree(ctx, c).await {
                return Attempt::Contended(c);
            }
        }
        // temporarily unlink s
        self.update_child(ctx, sp, s, sr).await;
        let nl = ctx.val(n, Field::Left).await;
        let nr = ctx.val(n, Field::Right).await;
        ctx.write(s, Field::Left, nl, "remove:copy-left").await;
        ctx.write(s, Field::Right, nr, "remove:copy-right").await;
        if let Some(c) = lk(nl) {
            ctx.write(c, Field::Parent, link(s), "remove:fix-parent").await;
        }
        if let Some(c) = lk(nr) {
            ctx.write(c, Field::Parent, link(s), "remove:fix-parent").await;
        }
        self.update_child(ctx, par, n, Some(s)).await;
        self.clear_children(ctx, n, lk(nl), lk(nr)).await;
        ctx.unlock_kind(Latch::Tree).await;
        Attempt::Done(())
    }

    /// Drops the child links of a node just cut out of the tree. It stays
    /// on the list until its delete finishes, and a stale child link would
    /// lead from there to nodes whose own deletes may already be complete.
    async fn clear_children(self, ctx: &Ctx, n: ObjId, l: Option<ObjId>, r: Option<ObjId>) {
        if l.is_some() {
            ctx.write(n, Field::Left, Value::Null, "remove:clear-child").await;
        }
        if r.is_some() {
            ctx.write(n, Field::Right, Value::Null, "remove:clear-child").await;
        }
    }

    /// Replaces child `n` of `p` by `c`. Caller holds the latches of `p`
    /// and `n`.
    async fn update_child(self, ctx: &Ctx, p: ObjId, n: ObjId, c: Option<ObjId>) {
        let side = if lk(ctx.val(p, Field::Left).await) == Some(n) { Field::Left } else { Field::Right };
        ctx.write(p, side, Value::from_link(c), "tree:update-child").await;
        if let Some(c) = c {
            ctx.write(c, Field::Parent, link(p), "tree:update-parent").await;
        }
    }

    /// Right rotation of `p.left` where `p` is the node `tree_locate(key)`
    /// lands on. Gives up without writing if anything is contended.
    pub async fn rotate_right_left(self, ctx: &Ctx, key: i64) -> Result<Ret, Abort> {
        let mut walk = ctx.walk_inv("lo:rotate-locate", Some(key), ReachKind::Succ, ExtendKind::TreePred, false);
        let (p, _) = self.tree_locate(ctx, &mut walk, key).await;
        ctx.log_walk(walk);
        ctx.lock(p, Latch::Tree).await;
        if self.rotate_locked(ctx, p).await.is_none() {
            ctx.unlock_all().await;
        }
        Ok(Ret::Unit)
    }

    async fn rotate_locked(self, ctx: &Ctx, p: ObjId) -> Option<()> {
        if flag(ctx.val(p, Field::Rem).await) || !self.in_tree(ctx, p).await {
            return None;
        }
        let y = lk(ctx.val(p, Field::Left).await)?;
        if !ctx.try_lock(y, Latch::Tree).await
            || lk(ctx.val(y, Field::Parent).await) != Some(p)
            || flag(ctx.val(y, Field::Rem).await)
        {
            return None;
        }
        let x = lk(ctx.val(y, Field::Left).await)?;
        if !ctx.try_lock(x, Latch::Tree).await
            || lk(ctx.val(x, Field::Parent).await) != Some(y)
            || flag(ctx.val(x, Field::Rem).await)
        {
            return None;
        }
        ctx.write(p, Field::Left, link(x), "rotate:unlink-y").await;
        ctx.write(p, Field::Left, link(x), "rotate:redundant-p-left").await;
        let beta = ctx.val(x, Field::Right).await;
        ctx.write(y, Field::Left, beta, "rotate:move-beta").await;
        ctx.write(x, Field::Right, link(y), "rotate:link-y").await;
        ctx.write(x, Field::Parent, link(p), "rotate:fix-parent").await;
        ctx.write(y, Field::Parent, link(x), "rotate:fix-parent").await;
        if let Some(b) = lk(beta) {
            ctx.write(b, Field::Parent, link(y), "rotate:fix-parent").await;
        }
        ctx.unlock_all().await;
        Some(())
    }
}
