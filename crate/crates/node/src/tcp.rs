//! Socket carrier: each message travels as a big-endian `u32` length followed
//! by its JSON envelope. Delivery is at least once; receivers drop repeats.

use std::collections::{HashMap, HashSet};
use std::io;
use std::net::SocketAddr;
use std::time::Duration;

use choreo_core::Message;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;

const MAX_FRAME: u32 = 64 << 20;

pub async fn write_frame<W: AsyncWriteExt + Unpin>(w: &mut W, msg: &Message) -> io::Result<()> {
    let body = serde_json::to_vec(msg).map_err(io::Error::other)?;
    let len = u32::try_from(body.len()).map_err(|_| io::Error::other("frame too large"))?;
    w.write_all(&len.to_be_bytes()).await?;
    w.write_all(&body).await?;
    w.flush().await
}

/// `None` on a clean end of stream.
pub async fn read_frame<R: AsyncReadExt + Unpin>(r: &mut R) -> io::Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).await?;
    serde_json::from_slice(&body).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Remembers `(sender, case, seq)` triples already delivered.
#[derive(Debug, Default)]
pub struct Dedup {
    seen: HashSet<(String, String, u64)>,
}

impl Dedup {
    /// True the first time a message is seen.
    pub fn admit(&mut self, msg: &Message) -> bool {
        self.seen.insert((msg.sender.clone(), msg.case_id.clone(), msg.seq))
    }
}

/// Accepts connections on `listener` and forwards every decoded frame.
pub fn serve_inbox(listener: TcpListener, inbox: mpsc::UnboundedSender<Message>) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        loop {
            let Ok((mut stream, peer)) = listener.accept().await else { continue };
            let inbox = inbox.clone();
            tokio::spawn(async move {
                loop {
                    match read_frame(&mut stream).await {
                        Ok(Some(msg)) => {
                            if inbox.send(msg).is_err() {
                                return;
                            }
                        }
                        Ok(None) => return,
                        Err(e) => {
                            tracing::warn!(%peer, error = %e, "dropping connection");
                            return;
                        }
                    }
                }
            });
        }
    })
}

/// One ordered queue per recipient, drained by a task that (re)connects as needed.
pub struct Outbox {
    queues: HashMap<String, mpsc::UnboundedSender<Message>>,
}

impl Outbox {
    pub fn new(directory: impl IntoIterator<Item = (String, SocketAddr)>) -> Outbox {
        let queues = directory
            .into_iter()
            .map(|(id, addr)| {
                let (tx, rx) = mpsc::unbounded_channel();
                tokio::spawn(drain(addr, rx));
                (id, tx)
            })
            .collect();
        Outbox { queues }
    }

    /// Enqueues `msg`; errors when the recipient is not in the directory.
    pub fn send(&self, msg: Message) -> Result<(), String> {
        let queue = self.queues.get(&msg.recipient).ok_or_else(|| format!("unknown recipient {}", msg.recipient))?;
        queue.send(msg).map_err(|e| format!("outbox closed for {}", e.0.recipient))
    }
}

async fn drain(addr: SocketAddr, mut rx: mpsc::UnboundedReceiver<Message>) {
    let mut stream: Option<TcpStream> = None;
    while let Some(msg) = rx.recv().await {
        let mut backoff = Duration::from_millis(20);
        loop {
            if stream.is_none() {
                match TcpStream::connect(addr).await {
                    Ok(s) => stream = Some(s),
                    Err(e) => {
                        tracing::debug!(%addr, error = %e, "connect failed, retrying");
                        tokio::time::sleep(backoff).await;
                        backoff = (backoff * 2).min(Duration::from_secs(2));
                        continue;
                    }
                }
            }
            match write_frame(stream.as_mut().unwrap(), &msg).await {
                Ok(()) => break,
                Err(e) => {
                    tracing::debug!(%addr, error = %e, "send failed, reconnecting");
                    stream = None;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use choreo_core::{create_case, fixtures, MessageKind};

    fn message(seq: u64) -> Message {
        Message {
            kind: MessageKind::Request,
            case_id: "c".into(),
            sender: "EC".into(),
            recipient: "AE".into(),
            artifact: create_case(&fixtures::peer_review_augmented().gmwf).unwrap(),
            seq,
        }
    }

    #[tokio::test]
    async fn frames_round_trip() {
        let (mut a, mut b) = tokio::io::duplex(1 << 16);
        write_frame(&mut a, &message(1)).await.unwrap();
        write_frame(&mut a, &message(2)).await.unwrap();
        drop(a);
        assert_eq!(read_frame(&mut b).await.unwrap(), Some(message(1)));
        assert_eq!(read_frame(&mut b).await.unwrap(), Some(message(2)));
        assert_eq!(read_frame(&mut b).await.unwrap(), None);
    }

    #[tokio::test]
    async fn oversized_frame_is_refused() {
        let (mut a, mut b) = tokio::io::duplex(64);
        a.write_all(&u32::MAX.to_be_bytes()).await.unwrap();
        assert_eq!(read_frame(&mut b).await.unwrap_err().kind(), io::ErrorKind::InvalidData);
    }

    #[test]
    fn dedup_admits_once() {
        let mut d = Dedup::default();
        assert!(d.admit(&message(1)));
        assert!(!d.admit(&message(1)));
        assert!(d.admit(&message(2)));
    }

    #[tokio::test]
    async fn outbox_delivers_in_order() {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, mut rx) = mpsc::unbounded_channel();
        serve_inbox(listener, tx);
        let outbox = Outbox::new([("AE".to_string(), addr)]);
        for seq in 1..=5 {
            outbox.send(message(seq)).unwrap();
        }
        for seq in 1..=5 {
            assert_eq!(rx.recv().await.unwrap().seq, seq);
        }
        let mut stray = message(6);
        stray.recipient = "R9".into();
        assert!(outbox.send(stray).is_err());
    }
}
