//! Fixtures shared by the benchmarks.

use rand::Rng;

use ragan_core::channels::Split;
use ragan_core::training::Batch;
use ragan_core::{AdversarialPair, ChannelModel, LinkConfig, Receiver, Streams, Transmitter};

pub struct Fixture {
    pub link: LinkConfig,
    pub tx: Transmitter,
    pub rx: Receiver,
    pub pair: AdversarialPair,
    pub batch: Batch,
}

/// Freshly initialized networks and one drawn batch of `link.batch_size` messages.
pub fn fixture(pilot: bool, channel: &ChannelModel) -> Fixture {
    let mut link = LinkConfig::default();
    link.pilot = pilot;
    let streams = Streams::new(7);
    let mut rng = streams.stream("bench");
    let mut lat = streams.stream("bench/latent");
    let tx = Transmitter::new(link.alphabet, link.channel_uses, &mut rng).unwrap();
    let rx = Receiver::new(link.alphabet, link.frame_width(), &mut rng).unwrap();
    let pair = AdversarialPair::new(&link, true, &mut rng).unwrap();
    let msgs: Vec<usize> = (0..link.batch_size)
        .map(|_| rng.random_range(0..link.alphabet))
        .collect();
    let batch = Batch::draw(
        &link,
        channel,
        Split::Train,
        link.noise_var(),
        msgs,
        2 * link.channel_uses,
        &mut rng,
        &mut lat,
    )
    .unwrap();
    Fixture {
        link,
        tx,
        rx,
        pair,
        batch,
    }
}
